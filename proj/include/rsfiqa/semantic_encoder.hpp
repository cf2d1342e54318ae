#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rsfiqa/description.hpp"
#include "rsfiqa/numerics/ops.hpp"
#include "rsfiqa/numerics/parameters.hpp"

namespace rsfiqa {

// Which parts of a region description reach the text encoder.
struct DescriptionFields {
  bool descriptions = true;  // false replaces every description with "Answer."
  bool content = true;
  bool level = true;
  bool score = true;
  std::array<bool, 5> dims{true, true, true, true, true};  // indexed by Dimension

  bool uses(Dimension d) const { return dims[static_cast<std::size_t>(d)]; }
};

inline constexpr std::string_view kPlaceholderDescription = "Answer.";

// "<content>. color: good (70); noise: fair (55); ...; overall: good (64)."
// Dimensions always appear in canonical order and scores are rounded to
// integers. Anything switched off is omitted; if nothing is left the text is
// "Answer.".
std::string compose_description(const RegionDescriptionRecord& rec, const DescriptionFields& fields = {});

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view text);
// FNV-1a 64 of the token (basis xor seed), reduced mod vocab.
std::size_t token_id(std::string_view token, std::size_t vocab, std::uint64_t seed = 0);

struct TextEmbedding {
  Var tokens;  // T x d, rows past valid_count are zero
  std::size_t valid_count = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  // EmptyText when the text has no tokens.
  virtual TextEmbedding encode(std::string_view text) const = 0;
};

struct HashedEncoderConfig {
  std::size_t max_tokens = 16;  // T
  std::size_t dim = 32;         // d
  std::size_t vocab = 4096;     // V
  std::uint64_t hash_seed = 0;
};

// Trainable V x d table ("text.embedding") over hashed token ids.
class HashedTextEncoder final : public TextEncoder {
 public:
  HashedTextEncoder(HashedEncoderConfig config, ParameterSet& params, std::mt19937_64& rng);

  std::string id() const override { return "hashed-embedding"; }
  std::size_t dim() const override { return config_.dim; }
  TextEmbedding encode(std::string_view text) const override;

  const HashedEncoderConfig& config() const { return config_; }
  const Var& table() const { return table_; }

 private:
  HashedEncoderConfig config_;
  Var table_;
};

}  // namespace rsfiqa
