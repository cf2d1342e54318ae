#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rsfiqa/description.hpp"
#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?)://([^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) fail(ErrorCode::InvalidConfig, "endpoint is not an http(s) URL: " + url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (m[1] == "https") fail(ErrorCode::InvalidConfig, "this build has no TLS support; use an http endpoint");
#endif
  return {m[1].str() + "://" + m[2].str(), m[3].matched ? m[3].str() : "/v1/chat/completions"};
}

std::string png_string(const ImageTensor& image) {
  const auto bytes = encode_png(image);
  return std::string(bytes.begin(), bytes.end());
}

std::string data_url(const std::string& png) { return "data:image/png;base64," + httplib::detail::base64_encode(png); }

}  // namespace

RemoteEndpoint RemoteEndpoint::from_env() {
  const char* url = std::getenv("RSFIQA_MLLM_ENDPOINT");
  const char* key = std::getenv("RSFIQA_MLLM_API_KEY");
  if (!url || !*url) fail(ErrorCode::InvalidConfig, "RSFIQA_MLLM_ENDPOINT is not set");
  if (!key || !*key) fail(ErrorCode::InvalidConfig, "RSFIQA_MLLM_API_KEY is not set");
  RemoteEndpoint e;
  e.url = url;
  e.api_key = key;
  return e;
}

std::vector<AttemptRecord> RemoteDescriber::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::size_t RemoteDescriber::level_overrides() const {
  std::lock_guard lock(mutex_);
  return level_overrides_;
}

std::string RemoteDescriber::ask(PromptKind kind, Dimension dim, const std::string& image_png,
                                 const std::string& overlay_png) const {
  const ParsedUrl url = parse_url(endpoint_.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint_.timeout);
  client.set_read_timeout(endpoint_.timeout);
  client.set_write_timeout(endpoint_.timeout);

  const nlohmann::json body{
      {"model", endpoint_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "user"},
         {"content",
          {{{"type", "image_url"}, {"image_url", {{"url", data_url(image_png)}}}},
           {{"type", "image_url"}, {"image_url", {{"url", data_url(overlay_png)}}}},
           {{"type", "text"}, {"text", format_prompt(kind, dim)}}}}}}},
  };
  const std::string payload = body.dump();
  httplib::Headers headers{{"Authorization", "Bearer " + endpoint_.api_key}};

  auto log = [&](int attempt, int status, std::string outcome) {
    std::lock_guard lock(mutex_);
    attempts_.push_back({kind, dim, attempt, status, std::move(outcome)});
  };

  std::string last_problem;
  bool last_unparseable = false;
  for (int attempt = 1; attempt <= endpoint_.max_retries + 1; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(endpoint_.initial_backoff * (1 << (attempt - 2)));
    auto res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_problem = "transport failure: " + httplib::to_string(res.error());
      last_unparseable = false;
      log(attempt, 0, "transport");
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      log(attempt, res->status, "auth");
      fail(ErrorCode::AuthError, "endpoint rejected the credential (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status >= 500 || res->status == 429) {
      last_problem = "HTTP " + std::to_string(res->status);
      last_unparseable = false;
      log(attempt, res->status, "transient");
      continue;
    }
    if (res->status != 200) {
      log(attempt, res->status, "rejected");
      fail(ErrorCode::TransportError, "endpoint answered HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      std::string text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      parse_response(kind, dim, text);  // validate before accepting
      log(attempt, res->status, "ok");
      return text;
    } catch (const std::exception& e) {
      last_problem = e.what();
      last_unparseable = true;
      log(attempt, res->status, "unparseable");
    }
  }
  fail(last_unparseable ? ErrorCode::UnparseableResponse : ErrorCode::TransportError,
       "gave up after " + std::to_string(endpoint_.max_retries + 1) + " attempts: " + last_problem);
}

RegionDescriptionRecord RemoteDescriber::describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                                  const std::string& image_id) const {
  if (mask.height != image.height() || mask.width != image.width()) {
    fail(ErrorCode::ShapeMismatch, "mask and image extents differ");
  }
  if (region >= mask.l_eff || mask.area(region) == 0) {
    fail(ErrorCode::EmptyRegion, "region " + std::to_string(region) + " is empty");
  }
  const std::string image_png = png_string(image);
  const std::string overlay_png = png_string(highlight_overlay(image, mask, region));

  RegionDescriptionRecord rec;
  rec.image_id = image_id;
  rec.region_index = region;
  rec.content = std::get<std::string>(
      parse_response(PromptKind::Content, Dimension::Overall, ask(PromptKind::Content, Dimension::Overall, image_png, overlay_png)));
  for (Dimension d : kDimensions) {
    const auto level = std::get<QualityLevel>(parse_response(PromptKind::Level, d, ask(PromptKind::Level, d, image_png, overlay_png)));
    const double score = std::get<double>(parse_response(PromptKind::Score, d, ask(PromptKind::Score, d, image_png, overlay_png)));
    // The score is the finer answer; keep records on the quintile map.
    const QualityLevel resolved = level_for_score(score);
    if (resolved != level) {
      std::lock_guard lock(mutex_);
      ++level_overrides_;
    }
    rec[d] = {resolved, score};
  }
  return rec;
}

RegionDescriptionRecord remote_describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                        const RemoteEndpoint& endpoint, const std::string& image_id) {
  return RemoteDescriber(endpoint).describe(image, mask, region, image_id);
}

}  // namespace rsfiqa
