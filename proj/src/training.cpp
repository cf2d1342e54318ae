#include "rsfiqa/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "rsfiqa/error.hpp"
#include "rsfiqa/metrics.hpp"

namespace rsfiqa {

double cosine_lr(const RunConfig& config, std::size_t epoch) {
  const double hi = config.peak_lr();
  const double lo = config.eta_min;
  return lo + (hi - lo) * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                          static_cast<double>(config.t_max))) / 2.0;
}

AdamW::AdamW(const ParameterSet& params, double weight_decay, double beta1, double beta2, double eps)
    : params_(params.entries()), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Tensor(p.var.shape(), 0.0));
    v_.push_back(Tensor(p.var.shape(), 0.0));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var p = params_[i].var;
    if (!p.has_grad()) continue;
    const Tensor g = p.grad();
    Tensor& w = p.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[k]);
    }
  }
}

namespace {

std::vector<Tensor> copy_values(const ParameterSet& params) {
  std::vector<Tensor> out;
  for (const auto& e : params.entries()) out.push_back(e.var.value());
  return out;
}

void assign_values(ParameterSet& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    Var v = params.entries()[i].var;
    v.mutable_value() = values[i];
  }
}

// One of the eight flips and transposes; none of them changes the distortion
// present in a region. Transposes need a square input.
struct Augmented {
  ImageTensor image;
  MaskSet mask;
};

Augmented augment_sample(const PreparedSample& s, unsigned code) {
  const std::size_t h = s.image.height(), w = s.image.width();
  const bool transpose = (code & 4u) && h == w;
  Tensor px({transpose ? w : h, transpose ? h : w, 3}, 0.0);
  Augmented out{ImageTensor(), s.mask};
  out.mask.height = transpose ? w : h;
  out.mask.width = transpose ? h : w;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sy = (code & 2u) ? h - 1 - y : y, sx = (code & 1u) ? w - 1 - x : x;
      const std::size_t ty = transpose ? x : y, tx = transpose ? y : x;
      const std::size_t dst = ty * out.mask.width + tx;
      out.mask.labels[dst] = s.mask.labels[sy * w + sx];
      for (std::size_t c = 0; c < 3; ++c) px[dst * 3 + c] = s.image.at(sy, sx, c);
    }
  out.image = ImageTensor(std::move(px));
  return out;
}

double validation_srcc(const RsfiqaModel& model, std::span<const PreparedSample> val) {
  if (val.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto preds = predict_unit(model, val);
  std::vector<double> mos;
  for (const auto& s : val) mos.push_back(s.mos);
  try {
    return srcc(mos, preds);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateVariance) return std::numeric_limits<double>::quiet_NaN();
    throw;
  }
}

}  // namespace

Checkpoint train(const RunConfig& config, std::span<const PreparedSample> train_set,
                 std::span<const PreparedSample> val_set, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) fail(ErrorCode::EmptyBatch, "training split is empty");
  std::vector<double> raw;
  for (const auto& s : train_set) raw.push_back(s.mos);
  const MosNormalization norm = fit_mos_normalization(raw);

  RsfiqaModel model(config);
  AdamW optimizer(model.params(), config.weight_decay);
  const bool has_lambda = model.params().contains("rsa.lambda");

  // Region texts do not change during training.
  std::vector<std::vector<std::string>> texts;
  for (const auto& s : train_set) texts.push_back(model.region_texts(s));

  std::mt19937_64 order_rng(config.seed ^ 0x5eedba7c4ULL);
  std::mt19937_64 augment_rng(config.seed ^ 0xa06e7ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  Checkpoint result;
  result.config = config;
  result.normalization = norm;
  std::vector<Tensor> best;
  double best_srcc = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(config, epoch);
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      model.params().zero_grad();
      std::vector<Var> preds;
      std::vector<double> targets;
      for (std::size_t k = start; k < stop; ++k) {
        const PreparedSample& s = train_set[order[k]];
        if (config.augment) {
          const Augmented a = augment_sample(s, static_cast<unsigned>(augment_rng() % 8));
          preds.push_back(model.forward(a.image, a.mask, texts[order[k]]));
        } else {
          preds.push_back(model.forward(s.image, s.mask, texts[order[k]]));
        }
        targets.push_back(norm.apply(s.mos));
      }
      Var loss = mse_loss(preds, targets);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        fail(ErrorCode::NonFiniteLoss,
             "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_id) + ": loss is not finite");
      }
      loss_sum += value * static_cast<double>(stop - start);
      backward(loss);
      optimizer.step(lr);
      if (has_lambda) {
        Var lambda = model.params().get("rsa.lambda");
        if (lambda.value()[0] < 0.0) lambda.mutable_value()[0] = 0.0;
      }
    }

    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(order.size()), validation_srcc(model, val_set)};
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);

    if (std::isfinite(entry.val_srcc)) {
      if (entry.val_srcc > best_srcc) {
        best_srcc = entry.val_srcc;
        best = copy_values(model.params());
        result.best_epoch = epoch;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        break;
      }
    }
  }
  if (best.empty()) {
    result.best_epoch = result.log.empty() ? 0 : result.log.back().epoch;
  } else {
    assign_values(model.params(), best);
  }
  for (const auto& e : model.params().entries()) result.parameters.emplace_back(e.name, e.var.value());
  return result;
}

Checkpoint snapshot(const RsfiqaModel& model, const MosNormalization& normalization) {
  Checkpoint c;
  c.config = model.config();
  c.normalization = normalization;
  for (const auto& e : model.params().entries()) c.parameters.emplace_back(e.name, e.var.value());
  return c;
}

std::unique_ptr<RsfiqaModel> restore_model(const Checkpoint& checkpoint) {
  auto model = std::make_unique<RsfiqaModel>(checkpoint.config);
  const auto& entries = model->params().entries();
  if (entries.size() != checkpoint.parameters.size()) {
    fail(ErrorCode::CorruptCheckpoint, "parameter count does not match the embedded config");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, value] = checkpoint.parameters[i];
    if (name != entries[i].name || value.shape() != entries[i].var.shape()) {
      fail(ErrorCode::CorruptCheckpoint, "parameter " + name + " does not match the model layout");
    }
    Var v = entries[i].var;
    v.mutable_value() = value;
  }
  return model;
}

namespace {

constexpr char kMagic[8] = {'R', 'S', 'F', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kByteOrder = 0x01020304;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<char> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const char> data) : data_(data) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) fail(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
  }
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.pod(kVersion);
  w.pod(kByteOrder);
  w.str(c.config.to_toml());
  w.pod(c.normalization.lo);
  w.pod(c.normalization.hi);
  w.pod<std::uint64_t>(c.best_epoch);
  w.pod<std::uint64_t>(c.log.size());
  for (const auto& e : c.log) {
    w.pod<std::uint64_t>(e.epoch);
    w.pod(e.lr);
    w.pod(e.train_loss);
    w.pod(e.val_srcc);
  }
  w.pod<std::uint64_t>(c.parameters.size());
  for (const auto& [name, t] : c.parameters) {
    w.str(name);
    w.pod<std::uint64_t>(t.rank());
    for (std::size_t d : t.shape()) w.pod<std::uint64_t>(d);
    for (double v : t.data()) w.pod(v);
  }
  w.pod(fnv1a(w.bytes));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::CorruptCheckpoint, path.string() + " is not a checkpoint");
  }
  const std::span<const char> body(bytes.data(), bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + body.size(), sizeof stored_sum);

  Reader r(body.subspan(sizeof kMagic));
  if (const auto version = r.pod<std::uint32_t>(); version != kVersion) {
    fail(ErrorCode::CorruptCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  if (r.pod<std::uint32_t>() != kByteOrder) fail(ErrorCode::CorruptCheckpoint, "checkpoint byte order differs");
  if (fnv1a(body) != stored_sum) fail(ErrorCode::CorruptCheckpoint, "checksum mismatch in " + path.string());

  Checkpoint c;
  try {
    c.config = parse_config(r.str());
  } catch (const Error& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("embedded config: ") + e.what());
  }
  c.normalization.lo = r.pod<double>();
  c.normalization.hi = r.pod<double>();
  c.best_epoch = r.pod<std::uint64_t>();
  const auto entries = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < entries; ++i) {
    EpochLog e;
    e.epoch = r.pod<std::uint64_t>();
    e.lr = r.pod<double>();
    e.train_loss = r.pod<double>();
    e.val_srcc = r.pod<double>();
    c.log.push_back(e);
  }
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto rank = r.pod<std::uint64_t>();
    if (rank == 0 || rank > 8) fail(ErrorCode::CorruptCheckpoint, "bad rank for " + name);
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(r.pod<std::uint64_t>());
    Tensor t(shape, 0.0);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = r.pod<double>();
    c.parameters.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) fail(ErrorCode::CorruptCheckpoint, "trailing bytes in checkpoint");
  return c;
}

std::vector<double> predict_unit(const RsfiqaModel& model, std::span<const PreparedSample> samples) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.forward(s).value()[0]);
  return out;
}

std::vector<std::pair<std::string, double>> predict_mos(const RsfiqaModel& model,
                                                        const MosNormalization& normalization,
                                                        std::span<const PreparedSample> samples) {
  const auto unit = predict_unit(model, samples);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out.emplace_back(samples[i].image_id, normalization.invert(unit[i]));
  return out;
}

}  // namespace rsfiqa
