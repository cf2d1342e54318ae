#include "rsfiqa/semantic_encoder.hpp"

#include <cctype>
#include <cmath>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

std::string compose_description(const RegionDescriptionRecord& rec, const DescriptionFields& fields) {
  if (!fields.descriptions) return std::string(kPlaceholderDescription);
  std::string out;
  if (fields.content && !rec.content.empty()) out = rec.content + ".";
  if (fields.level || fields.score) {
    std::string dims;
    for (Dimension d : kDimensions) {
      if (!fields.uses(d)) continue;
      if (!dims.empty()) dims += "; ";
      dims += std::string(dimension_name(d)) + ":";
      if (fields.level) dims += " " + std::string(level_name(rec[d].level));
      if (fields.score) {
        const std::string s = std::to_string(std::lround(rec[d].score));
        dims += fields.level ? " (" + s + ")" : " " + s;
      }
    }
    if (!dims.empty()) out += (out.empty() ? "" : " ") + dims + ".";
  }
  return out.empty() ? std::string(kPlaceholderDescription) : out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t token_id(std::string_view token, std::size_t vocab, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h % vocab);
}

HashedTextEncoder::HashedTextEncoder(HashedEncoderConfig config, ParameterSet& params, std::mt19937_64& rng)
    : config_(config) {
  if (config_.vocab == 0 || config_.dim == 0 || config_.max_tokens == 0) {
    fail(ErrorCode::InvalidConfig, "text encoder sizes must be positive");
  }
  table_ = params.add("text.embedding", normal_tensor({config_.vocab, config_.dim},
                                                      1.0 / std::sqrt(static_cast<double>(config_.dim)), rng));
}

TextEmbedding HashedTextEncoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) fail(ErrorCode::EmptyText, "description has no tokens");
  std::vector<std::size_t> ids;
  ids.reserve(std::min(tokens.size(), config_.max_tokens));
  for (std::size_t i = 0; i < tokens.size() && i < config_.max_tokens; ++i)
    ids.push_back(token_id(tokens[i], config_.vocab, config_.hash_seed));
  return {ops::embedding(table_, ids, config_.max_tokens), ids.size()};
}

}  // namespace rsfiqa
