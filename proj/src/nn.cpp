#include "modepool/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <numeric>
#include <thread>

namespace modepool {

void ClassifierModel::validate() const {
  if (input_dim != 3 && input_dim != 6)
    throw config_error("input_dim: must be 3, or 6 with normals");
  if (mlp.empty() || fc.empty()) throw config_error("model: needs MLP and FC layers");
  int in = input_dim;
  for (const auto& l : mlp) {
    if (l.weight.cols() != in || l.bias.size() != l.weight.rows())
      throw config_error("model: MLP layer shapes do not chain");
    in = static_cast<int>(l.weight.rows());
  }
  for (const auto& l : fc) {
    if (l.weight.cols() != in || l.bias.size() != l.weight.rows())
      throw config_error("model: FC layer shapes do not chain");
    in = static_cast<int>(l.weight.rows());
  }
  for (const auto& l : mlp) {
    require_finite(l.weight, "model weights");
    require_finite(l.bias, "model bias");
  }
  for (const auto& l : fc) {
    require_finite(l.weight, "model weights");
    require_finite(l.bias, "model bias");
  }
  pool.validate();
}

ClassifierModel make_classifier(int input_dim, const std::vector<int>& mlp_widths,
                                const std::vector<int>& fc_hidden, int classes,
                                const PoolConfig& pool, std::uint64_t seed) {
  if (mlp_widths.empty()) throw config_error("mlp_widths: must not be empty");
  if (classes < 2) throw config_error("classes: need at least 2");
  Rng rng(seed);
  auto dense = [&](int out, int in) {
    DenseLayer l;
    l.weight.resize(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = scale * rng.gaussian();
    l.bias = Eigen::VectorXd::Zero(out);
    return l;
  };

  ClassifierModel model;
  model.input_dim = input_dim;
  model.pool = pool;
  int in = input_dim;
  for (int w : mlp_widths) {
    model.mlp.push_back(dense(w, in));
    in = w;
  }
  for (int w : fc_hidden) {
    model.fc.push_back(dense(w, in));
    in = w;
  }
  model.fc.push_back(dense(classes, in));
  model.validate();
  return model;
}

namespace {

Eigen::MatrixXd assemble_input(const ClassifierModel& model, const PointCloud& cloud) {
  if (cloud.size() < 1) throw std::invalid_argument("forward: cloud is empty");
  Eigen::MatrixXd x(cloud.size(), model.input_dim);
  x.leftCols(3) = cloud.points;
  if (model.input_dim == 6) {
    if (!cloud.has_normals())
      throw std::invalid_argument("forward: model expects normals but the cloud has none");
    x.rightCols(3) = cloud.normals;
  }
  return x;
}

}  // namespace

Eigen::VectorXd forward(const ClassifierModel& model, const PointCloud& cloud,
                        ForwardCache* cache) {
  Eigen::MatrixXd act = assemble_input(model, cloud);
  if (cache) {
    cache->input = act;
    cache->mlp_act.clear();
    cache->fc_act.clear();
  }

  const std::size_t L = model.mlp.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = model.mlp[l];
    Eigen::MatrixXd z = act * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < L) z = z.cwiseMax(0.0);  // final MLP layer stays linear
    act = std::move(z);
    if (cache) cache->mlp_act.push_back(act);
  }

  PoolResult pooled = pool_forward(act, model.pool);
  Eigen::VectorXd v = pooled.output;
  if (cache) cache->pooled = std::move(pooled);

  const std::size_t F = model.fc.size();
  for (std::size_t l = 0; l < F; ++l) {
    const auto& layer = model.fc[l];
    Eigen::VectorXd z = layer.weight * v + layer.bias;
    if (l + 1 < F) z = z.cwiseMax(0.0);
    v = std::move(z);
    if (cache) cache->fc_act.push_back(v);
  }
  return v;
}

int predict(const ClassifierModel& model, const PointCloud& cloud) {
  const Eigen::VectorXd logits = forward(model, cloud);
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[label];
}

Gradients zero_gradients(const ClassifierModel& model) {
  Gradients g;
  auto zero_like = [](const std::vector<DenseLayer>& src) {
    std::vector<DenseLayer> out;
    out.reserve(src.size());
    for (const auto& l : src) {
      out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                     Eigen::VectorXd::Zero(l.bias.size())});
    }
    return out;
  };
  g.mlp = zero_like(model.mlp);
  g.fc = zero_like(model.fc);
  return g;
}

double backward(const ClassifierModel& model, const ForwardCache& cache, int label,
                Gradients& grads) {
  const std::size_t L = model.mlp.size();
  const std::size_t F = model.fc.size();
  if (cache.mlp_act.size() != L || cache.fc_act.size() != F ||
      cache.input.cols() != model.input_dim ||
      cache.pooled.output.size() != model.feature_dim() ||
      grads.mlp.size() != L || grads.fc.size() != F)
    throw std::invalid_argument("backward: cache does not match the model");
  const Eigen::VectorXd& logits = cache.fc_act.back();
  const double loss = cross_entropy(logits, label);

  Eigen::VectorXd dz = softmax(logits);
  dz[label] -= 1.0;

  for (std::size_t l = F; l-- > 0;) {
    const Eigen::VectorXd& in =
        l == 0 ? cache.pooled.output : static_cast<const Eigen::VectorXd&>(cache.fc_act[l - 1]);
    grads.fc[l].weight.noalias() += dz * in.transpose();
    grads.fc[l].bias += dz;
    if (l > 0) {
      Eigen::VectorXd da = model.fc[l].weight.transpose() * dz;
      dz = (cache.fc_act[l - 1].array() > 0.0).select(da, 0.0);
    } else {
      dz = model.fc[l].weight.transpose() * dz;
    }
  }

  // dz now holds the gradient w.r.t. the pooled feature
  Eigen::MatrixXd dact =
      pool_backward(cache.mlp_act.back(), model.pool, cache.pooled.selection, dz);

  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd& in = l == 0 ? cache.input : cache.mlp_act[l - 1];
    grads.mlp[l].weight.noalias() += dact.transpose() * in;
    grads.mlp[l].bias += dact.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd da = dact * model.mlp[l].weight;
      dact = (cache.mlp_act[l - 1].array() > 0.0).select(da, 0.0);
    }
  }
  return loss;
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw config_error("optimizer: unknown optimizer '" + s + "'");
}

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw config_error("learning_rate: must be > 0");
  if (epochs < 1) throw config_error("epochs: must be >= 1");
  if (batch_size < 1) throw config_error("batch_size: must be >= 1");
}

namespace {

struct AdamState {
  Gradients m, v;
  long t = 0;
};

void apply_step(ClassifierModel& model, const Gradients& g, const TrainConfig& cfg,
                AdamState& adam) {
  auto step_layer = [&](DenseLayer& p, const DenseLayer& gl, DenseLayer& ml, DenseLayer& vl) {
    if (cfg.optimizer == Optimizer::sgd) {
      p.weight -= cfg.learning_rate * gl.weight;
      p.bias -= cfg.learning_rate * gl.bias;
      return;
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    ml.weight = b1 * ml.weight + (1.0 - b1) * gl.weight;
    ml.bias = b1 * ml.bias + (1.0 - b1) * gl.bias;
    vl.weight = b2 * vl.weight + (1.0 - b2) * gl.weight.cwiseProduct(gl.weight);
    vl.bias = b2 * vl.bias + (1.0 - b2) * gl.bias.cwiseProduct(gl.bias);
    p.weight.array() -=
        cfg.learning_rate * (ml.weight.array() / c1) / ((vl.weight.array() / c2).sqrt() + eps);
    p.bias.array() -=
        cfg.learning_rate * (ml.bias.array() / c1) / ((vl.bias.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < model.mlp.size(); ++l)
    step_layer(model.mlp[l], g.mlp[l], adam.m.mlp[l], adam.v.mlp[l]);
  for (std::size_t l = 0; l < model.fc.size(); ++l)
    step_layer(model.fc[l], g.fc[l], adam.m.fc[l], adam.v.fc[l]);
}

}  // namespace

std::vector<EpochStats> train(ClassifierModel& model, const std::vector<PointCloud>& dataset,
                              const TrainConfig& config) {
  config.validate();
  model.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const int classes = model.class_count();
  for (const auto& c : dataset) {
    if (c.label < 0 || c.label >= classes)
      throw std::invalid_argument("train: label out of range");
  }

  const int workers = config.parallelism > 0
                          ? config.parallelism
                          : std::max(1u, std::thread::hardware_concurrency());

  Rng rng(config.seed);
  AdamState adam{zero_gradients(model), zero_gradients(model), 0};
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochStats> curve;
  curve.reserve(config.epochs);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // seeded shuffle
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    double loss_sum = 0.0;
    long correct = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const int bsize = static_cast<int>(end - start);

      // rotation draws happen up front, in batch order, to stay deterministic
      std::vector<double> angles(bsize, 0.0);
      if (config.rotate_augment) {
        for (int b = 0; b < bsize; ++b) angles[b] = rng.uniform(0.0, 2.0 * M_PI);
      }

      struct SampleOut {
        Gradients grads;
        double loss = 0.0;
        bool correct = false;
      };
      std::vector<SampleOut> outs(bsize);
      auto run_sample = [&](int b) {
        const PointCloud& base = dataset[order[start + b]];
        const PointCloud sample =
            config.rotate_augment ? rotate_z(base, angles[b]) : base;
        ForwardCache cache;
        const Eigen::VectorXd logits = forward(model, sample, &cache);
        outs[b].grads = zero_gradients(model);
        outs[b].loss = backward(model, cache, sample.label, outs[b].grads);
        Eigen::Index am = 0;
        logits.maxCoeff(&am);
        outs[b].correct = static_cast<int>(am) == sample.label;
      };

      if (workers > 1 && bsize > 1) {
        std::vector<std::future<void>> futures;
        futures.reserve(bsize);
        for (int b = 0; b < bsize; ++b)
          futures.push_back(std::async(std::launch::async, run_sample, b));
        for (auto& f : futures) f.get();
      } else {
        for (int b = 0; b < bsize; ++b) run_sample(b);
      }

      // reduce in sample order
      Gradients batch_grads = zero_gradients(model);
      double batch_loss = 0.0;
      for (int b = 0; b < bsize; ++b) {
        for (std::size_t l = 0; l < batch_grads.mlp.size(); ++l) {
          batch_grads.mlp[l].weight += outs[b].grads.mlp[l].weight;
          batch_grads.mlp[l].bias += outs[b].grads.mlp[l].bias;
        }
        for (std::size_t l = 0; l < batch_grads.fc.size(); ++l) {
          batch_grads.fc[l].weight += outs[b].grads.fc[l].weight;
          batch_grads.fc[l].bias += outs[b].grads.fc[l].bias;
        }
        batch_loss += outs[b].loss;
        correct += outs[b].correct;
      }
      const double inv = 1.0 / bsize;
      for (auto& l : batch_grads.mlp) {
        l.weight *= inv;
        l.bias *= inv;
      }
      for (auto& l : batch_grads.fc) {
        l.weight *= inv;
        l.bias *= inv;
      }
      loss_sum += batch_loss;

      if (!std::isfinite(batch_loss)) {
        throw training_error("training diverged: non-finite loss in epoch " +
                             std::to_string(epoch) + " at sample " + std::to_string(start));
      }

      adam.t += 1;
      apply_step(model, batch_grads, config, adam);
    }

    EpochStats st;
    st.epoch = epoch;
    st.loss = loss_sum / static_cast<double>(dataset.size());
    st.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    curve.push_back(st);
  }
  return curve;
}

namespace {

constexpr char kMagic[4] = {'M', 'P', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

void put_layer(std::string& buf, const DenseLayer& l) {
  put(buf, static_cast<std::int32_t>(l.weight.rows()));
  put(buf, static_cast<std::int32_t>(l.weight.cols()));
  buf.append(reinterpret_cast<const char*>(l.weight.data()),
             sizeof(double) * static_cast<std::size_t>(l.weight.size()));
  buf.append(reinterpret_cast<const char*>(l.bias.data()),
             sizeof(double) * static_cast<std::size_t>(l.bias.size()));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size())
      throw io_error(io_error::kind::truncated, path_ + ": truncated model file");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  DenseLayer get_layer() {
    const auto rows = get<std::int32_t>();
    const auto cols = get<std::int32_t>();
    if (rows <= 0 || cols <= 0 || rows > (1 << 24) || cols > (1 << 24))
      throw io_error(io_error::kind::truncated, path_ + ": implausible layer shape");
    DenseLayer l;
    l.weight.resize(rows, cols);
    const std::size_t wbytes = sizeof(double) * static_cast<std::size_t>(l.weight.size());
    if (pos_ + wbytes > buf_.size())
      throw io_error(io_error::kind::truncated, path_ + ": truncated model file");
    std::memcpy(l.weight.data(), buf_.data() + pos_, wbytes);
    pos_ += wbytes;
    l.bias.resize(rows);
    const std::size_t bbytes = sizeof(double) * static_cast<std::size_t>(rows);
    if (pos_ + bbytes > buf_.size())
      throw io_error(io_error::kind::truncated, path_ + ": truncated model file");
    std::memcpy(l.bias.data(), buf_.data() + pos_, bbytes);
    pos_ += bbytes;
    return l;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const ClassifierModel& model, const std::string& path) {
  model.validate();
  std::string buf;
  buf.append(kMagic, 4);
  put(buf, kVersion);
  put(buf, static_cast<std::int32_t>(model.input_dim));

  const auto& p = model.pool;
  put(buf, static_cast<std::uint8_t>(p.op));
  put(buf, static_cast<std::uint8_t>(p.grad_mode));
  put(buf, static_cast<std::uint8_t>(p.histogram_value));
  put(buf, static_cast<std::uint8_t>(p.ransac_value));
  put(buf, static_cast<std::uint8_t>(p.rho));
  put(buf, static_cast<std::int32_t>(p.bins));
  put(buf, p.range_lo);
  put(buf, p.range_hi);
  put(buf, p.epsilon);
  put(buf, p.hypothesis_fraction);
  put(buf, p.tau);
  put(buf, static_cast<std::int32_t>(p.max_iters));
  put(buf, p.tol);
  put(buf, p.seed);

  put(buf, static_cast<std::int32_t>(model.mlp.size()));
  for (const auto& l : model.mlp) put_layer(buf, l);
  put(buf, static_cast<std::int32_t>(model.fc.size()));
  for (const auto& l : model.fc) put_layer(buf, l);

  put(buf, fnv1a(buf.data(), buf.size()));
  atomic_write_file(path, buf);
}

ClassifierModel load_model(const std::string& path, std::optional<PoolOperator> expected_op) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(io_error::kind::open_failed, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t))
    throw io_error(io_error::kind::truncated, path + ": file too short");

  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw io_error(io_error::kind::bad_magic, path + ": not a model file");

  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a(buf.data(), body))
    throw io_error(io_error::kind::checksum_mismatch, path + ": checksum mismatch");

  Reader r(buf, path);
  char magic[4];
  for (auto& c : magic) c = r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw io_error(io_error::kind::bad_version,
                   path + ": unsupported model version " + std::to_string(version));

  ClassifierModel model;
  model.input_dim = r.get<std::int32_t>();
  auto& p = model.pool;
  p.op = static_cast<PoolOperator>(r.get<std::uint8_t>());
  p.grad_mode = static_cast<GradMode>(r.get<std::uint8_t>());
  p.histogram_value = static_cast<HistogramValue>(r.get<std::uint8_t>());
  p.ransac_value = static_cast<RansacValue>(r.get<std::uint8_t>());
  p.rho = static_cast<RhoKind>(r.get<std::uint8_t>());
  p.bins = r.get<std::int32_t>();
  p.range_lo = r.get<double>();
  p.range_hi = r.get<double>();
  p.epsilon = r.get<double>();
  p.hypothesis_fraction = r.get<double>();
  p.tau = r.get<double>();
  p.max_iters = r.get<std::int32_t>();
  p.tol = r.get<double>();
  p.seed = r.get<std::uint64_t>();

  const auto mlp_count = r.get<std::int32_t>();
  for (int i = 0; i < mlp_count; ++i) model.mlp.push_back(r.get_layer());
  const auto fc_count = r.get<std::int32_t>();
  for (int i = 0; i < fc_count; ++i) model.fc.push_back(r.get_layer());

  if (r.pos() != body)
    throw io_error(io_error::kind::truncated, path + ": trailing bytes in model file");

  model.validate();
  if (expected_op && model.pool.op != *expected_op) {
    throw config_error("model pool operator is " + to_string(model.pool.op) +
                       " but the run expects " + to_string(*expected_op));
  }
  return model;
}

}  // namespace modepool
