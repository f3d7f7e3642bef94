#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "modepool/cloud.hpp"
#include "modepool/pooling.hpp"

namespace modepool {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Shared per-point MLP -> pooling -> fully-connected head. Hidden layers are
// ReLU; the final MLP layer is linear so the pooled feature distribution is
// signed, and the final FC layer emits raw logits.
struct ClassifierModel {
  int input_dim = 3;  // 3, or 6 with normals
  std::vector<DenseLayer> mlp;
  PoolConfig pool;
  std::vector<DenseLayer> fc;

  int feature_dim() const { return static_cast<int>(mlp.back().weight.rows()); }
  int class_count() const { return static_cast<int>(fc.back().weight.rows()); }
  void validate() const;
};

ClassifierModel make_classifier(int input_dim, const std::vector<int>& mlp_widths,
                                const std::vector<int>& fc_hidden, int classes,
                                const PoolConfig& pool, std::uint64_t seed);

struct ForwardCache {
  Eigen::MatrixXd input;                 // N x input_dim
  std::vector<Eigen::MatrixXd> mlp_act;  // post-activation per MLP layer
  PoolResult pooled;
  std::vector<Eigen::VectorXd> fc_act;  // post-activation per FC layer (last = logits)
};

Eigen::VectorXd forward(const ClassifierModel& model, const PointCloud& cloud,
                        ForwardCache* cache = nullptr);

int predict(const ClassifierModel& model, const PointCloud& cloud);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int label);

struct Gradients {
  std::vector<DenseLayer> mlp;
  std::vector<DenseLayer> fc;
};

Gradients zero_gradients(const ClassifierModel& model);

// Softmax cross-entropy loss and its gradient w.r.t. every parameter, chained
// through the pooling backward. Accumulates into `grads`, returns the loss.
double backward(const ClassifierModel& model, const ForwardCache& cache, int label,
                Gradients& grads);

enum class Optimizer { sgd, adam };

Optimizer optimizer_from_string(const std::string& s);
std::string to_string(Optimizer o);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 50;
  int batch_size = 16;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  bool rotate_augment = true;  // random z-axis rotation per sample per epoch
  int parallelism = 0;         // worker threads per batch; 0 picks the hardware count

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

class training_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic given TrainConfig::seed: fixed shuffle, per-sample rotation
// draws, and a batch-gradient reduction summed in sample order regardless of
// the worker count. Throws training_error if the loss turns non-finite.
std::vector<EpochStats> train(ClassifierModel& model, const std::vector<PointCloud>& dataset,
                              const TrainConfig& config);

// Versioned binary container; round-trips bit-exactly.
void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path,
                           std::optional<PoolOperator> expected_op = std::nullopt);

}  // namespace modepool
