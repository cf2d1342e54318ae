#include "rsfiqa/model.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace fs = std::filesystem;

RsfiqaModel::RsfiqaModel(const RunConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  backbone_ = std::make_unique<ConvBackbone>(config_.channels, params_, rng);
  mhf_ = std::make_unique<MultiScaleFusion>(MhfConfig{config_.fused_channels, config_.heads}, *backbone_, params_, rng);
  text_ = std::make_unique<HashedTextEncoder>(
      HashedEncoderConfig{config_.max_tokens, config_.text_dim, config_.vocab, 0}, params_, rng);
  rsa_ = std::make_unique<RegionSemanticAttention>(
      RsaConfig{config_.guide_channels, config_.text_dim, config_.fused_channels, config_.heads, config_.lambda_init},
      params_, rng);
  head_ = std::make_unique<QualityHead>(HeadConfig{config_.fused_channels, config_.mlp_hidden, config_.heads}, params_, rng);
}

ForwardTrace RsfiqaModel::trace(const ImageTensor& image, const MaskSet& mask, std::span<const std::string> texts) const {
  if (image.height() != config_.height || image.width() != config_.width) {
    fail(ErrorCode::ShapeMismatch, "image is " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                                       ", model expects " + std::to_string(config_.height) + "x" +
                                       std::to_string(config_.width));
  }
  if (mask.height != image.height() || mask.width != image.width()) {
    fail(ErrorCode::ShapeMismatch, "mask extents differ from the image");
  }
  if (texts.size() != mask.l_eff) fail(ErrorCode::LengthMismatch, "need one description per region");

  ForwardTrace t;
  const Var pixels = image.as_var();
  const MultiLevelFeatures features = backbone_->extract(pixels);
  if (config_.mhf) {
    t.fused = mhf_->forward(features).fused;
  } else {
    const Var& top = features.top();
    t.fused = mhf_->gated_downsample(top, features.size() - 1, top.shape()[0], top.shape()[1]);
  }
  const std::size_t hn = t.fused.shape()[0], wn = t.fused.shape()[1];

  if (config_.rsa_bias) {
    std::vector<Var> resampled;
    resampled.reserve(mask.l_eff);
    for (std::size_t r = 0; r < mask.l_eff; ++r) {
      const auto indicator = mask.indicator(r);
      const Var guided = rsa_->region_guided_repr(text_->encode(texts[r]), indicator, pixels);
      resampled.push_back(rsa_->resample_repr(guided, hn, wn, hn * wn));
    }
    t.bias = rsa_->attention_bias(resampled);
  }
  t.attended = rsa_->attend(t.fused, t.bias);
  t.score = (*head_)(t.attended);
  return t;
}

std::vector<std::string> RsfiqaModel::region_texts(const PreparedSample& sample) const {
  const DescriptionFields fields = config_.description_fields();
  std::vector<std::string> texts;
  texts.reserve(sample.records.size());
  for (const auto& rec : sample.records) texts.push_back(compose_description(rec, fields));
  return texts;
}

Var RsfiqaModel::forward(const PreparedSample& sample) const {
  const auto texts = region_texts(sample);
  return forward(sample.image, sample.mask, texts);
}

Providers make_providers(const RunConfig& config, const fs::path& work_dir) {
  Providers p;
  p.segmenter = std::make_unique<KMeansSegmenter>();
  if (config.describer == "remote") {
    p.describer = std::make_unique<RemoteDescriber>(RemoteEndpoint::from_env());
  } else {
    p.describer = std::make_unique<HeuristicDescriber>();
  }
  if (!work_dir.empty()) {
    p.mask_dir = work_dir / "masks";
    fs::create_directories(*p.mask_dir);
    p.cache = std::make_unique<DescriptionCache>(work_dir / "descriptions.jsonl");
  }
  return p;
}

namespace {

// Masks and descriptions depend on resolution, L and seed as well as the image.
std::string variant_key(const RunConfig& config, const std::string& image_id) {
  return image_id + "@" + std::to_string(config.height) + "x" + std::to_string(config.width) + "/L" +
         std::to_string(config.regions) + "/s" + std::to_string(config.seed);
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

}  // namespace

PreparedSample prepare_image(const RunConfig& config, const std::string& image_id, const ImageTensor& image,
                             double mos, const Providers& providers) {
  PreparedSample s;
  s.image_id = image_id;
  s.mos = mos;
  s.image = (image.height() == config.height && image.width() == config.width)
                ? image
                : resize(image, config.height, config.width);
  const std::string key = variant_key(config, image_id);

  bool have_mask = false;
  std::optional<fs::path> base;
  if (providers.mask_dir) {
    base = *providers.mask_dir / file_safe(key);
    if (fs::exists(mask_paths(*base).labels) && fs::exists(mask_paths(*base).sidecar)) {
      s.mask = load_mask(*base);
      have_mask = s.mask.height == config.height && s.mask.width == config.width &&
                  s.mask.segmenter_id == providers.segmenter->id() && s.mask.seed == config.seed;
    }
  }
  if (!have_mask) {
    s.mask = postprocess(providers.segmenter->segment(s.image, config.regions, config.seed), config.regions,
                         config.height, config.width);
    s.mask.segmenter_id = providers.segmenter->id();
    s.mask.seed = config.seed;
    if (base) save_mask(s.mask, *base);
  }
  for (std::size_t r = 0; r < s.mask.l_eff; ++r) {
    RegionDescriptionRecord rec = describe_region(*providers.describer, providers.cache.get(), s.image, s.mask, r, key);
    rec.image_id = image_id;
    s.records.push_back(std::move(rec));
  }
  return s;
}

PreparedSample prepare_sample(const RunConfig& config, const DatasetRecord& record, const Providers& providers) {
  return prepare_image(config, record.image_id, read_png(record.path), record.mos, providers);
}

std::vector<PreparedSample> prepare_samples(const RunConfig& config, const DatasetIndex& index,
                                            const Providers& providers, std::size_t workers) {
  std::vector<PreparedSample> out(index.size());
  if (workers == 0) workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 8);
  workers = std::min(workers, std::max<std::size_t>(index.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < index.size(); i = next++) {
      try {
        out[i] = prepare_sample(config, index.records[i], providers);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = index.size();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

RunConfig gradcheck_config(std::uint64_t seed) {
  RunConfig c;
  c.height = c.width = 16;
  c.channels = {4, 6, 8};
  c.regions = 3;
  c.fused_channels = 8;
  c.guide_channels = 8;
  c.text_dim = 8;
  c.max_tokens = 16;
  c.vocab = 4096;
  c.mlp_hidden = 8;
  c.seed = seed;
  return c;
}

ModelGradCheck run_model_gradcheck(std::uint64_t seed, double epsilon, std::size_t samples_per_parameter) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = gradcheck_config(seed);
  RsfiqaModel model(config);
  Providers providers = make_providers(config);
  std::vector<PreparedSample> samples;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const SyntheticSample syn = generate_synthetic_sample(config.height, seed * 7919 + i);
    samples.push_back(prepare_image(config, "probe" + std::to_string(i), syn.image, syn.mos, providers));
  }
  const std::vector<double> targets{0.25, 0.8};
  auto loss = [&] {
    std::vector<Var> preds;
    for (const auto& s : samples) preds.push_back(model.forward(s));
    return mse_loss(preds, targets);
  };
  ModelGradCheck out;
  out.result = finite_diff_check(loss, model.params().entries(),
                                 {.epsilon = epsilon, .samples_per_parameter = samples_per_parameter, .seed = seed});
  out.parameter_groups = model.params().entries().size();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace rsfiqa
