#include "rsfiqa/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  return std::string(s.substr(a, s.find_last_not_of(" \t\r") - a + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorCode::InvalidConfig, key + ": expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) bad_value(key, text, "a number");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) bad_value(key, text, "a non-negative integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  bad_value(key, text, "true or false");
}

std::string to_string_value(const std::string& key, const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') return text.substr(1, text.size() - 2);
  bad_value(key, text, "a quoted string");
}

std::vector<std::string> to_list(const std::string& key, const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') bad_value(key, text, "an array");
  std::vector<std::string> items;
  std::stringstream ss(text.substr(1, text.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  // keep floats recognisable as floats in the file
  if (s.find_first_of(".e") == std::string::npos && s.find("inf") == std::string::npos) s += ".0";
  return s;
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const std::string& v) { return "\"" + v + "\""; }

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& text)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field scalar_field(T RunConfig::*member) {
  Field f;
  f.set = [member](RunConfig& c, const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, double>) c.*member = to_double(key, text);
    else if constexpr (std::is_same_v<T, bool>) c.*member = to_bool(key, text);
    else if constexpr (std::is_same_v<T, std::string>) c.*member = to_string_value(key, text);
    else c.*member = static_cast<T>(to_uint(key, text));
  };
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<T, double> || std::is_same_v<T, bool> || std::is_same_v<T, std::string>)
      return fmt(c.*member);
    else return fmt(static_cast<std::uint64_t>(c.*member));
  };
  return f;
}

Field dim_field(std::size_t index) {
  return {[index](RunConfig& c, const std::string& key, const std::string& text) { c.dims[index] = to_bool(key, text); },
          [index](const RunConfig& c) { return fmt(c.dims[index]); }};
}

// Ordered so that to_toml groups sections together.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("model.height", scalar_field(&RunConfig::height));
    t.emplace_back("model.width", scalar_field(&RunConfig::width));
    t.emplace_back("model.channels",
                   Field{[](RunConfig& c, const std::string& key, const std::string& text) {
                           c.channels.clear();
                           for (const auto& item : to_list(key, text)) c.channels.push_back(to_uint(key, item));
                         },
                         [](const RunConfig& c) {
                           std::string s = "[";
                           for (std::size_t i = 0; i < c.channels.size(); ++i)
                             s += (i ? ", " : "") + std::to_string(c.channels[i]);
                           return s + "]";
                         }});
    t.emplace_back("model.regions", scalar_field(&RunConfig::regions));
    t.emplace_back("model.fused_channels", scalar_field(&RunConfig::fused_channels));
    t.emplace_back("model.guide_channels", scalar_field(&RunConfig::guide_channels));
    t.emplace_back("model.text_dim", scalar_field(&RunConfig::text_dim));
    t.emplace_back("model.max_tokens", scalar_field(&RunConfig::max_tokens));
    t.emplace_back("model.vocab", scalar_field(&RunConfig::vocab));
    t.emplace_back("model.lambda_init", scalar_field(&RunConfig::lambda_init));
    t.emplace_back("model.heads", scalar_field(&RunConfig::heads));
    t.emplace_back("model.mlp_hidden", scalar_field(&RunConfig::mlp_hidden));
    t.emplace_back("train.batch_size", scalar_field(&RunConfig::batch_size));
    t.emplace_back("train.lr", scalar_field(&RunConfig::lr));
    t.emplace_back("train.weight_decay", scalar_field(&RunConfig::weight_decay));
    t.emplace_back("train.t_max", scalar_field(&RunConfig::t_max));
    t.emplace_back("train.eta_min", scalar_field(&RunConfig::eta_min));
    t.emplace_back("train.eta_max", scalar_field(&RunConfig::eta_max));
    t.emplace_back("train.epochs", scalar_field(&RunConfig::epochs));
    t.emplace_back("train.patience", scalar_field(&RunConfig::patience));
    t.emplace_back("train.augment", scalar_field(&RunConfig::augment));
    t.emplace_back("train.seed", scalar_field(&RunConfig::seed));
    t.emplace_back("train.split",
                   Field{[](RunConfig& c, const std::string& key, const std::string& text) {
                           const auto items = to_list(key, text);
                           if (items.size() != 3) bad_value(key, text, "three ratios");
                           for (std::size_t i = 0; i < 3; ++i) c.split[i] = to_double(key, items[i]);
                         },
                         [](const RunConfig& c) {
                           return "[" + fmt(c.split[0]) + ", " + fmt(c.split[1]) + ", " + fmt(c.split[2]) + "]";
                         }});
    t.emplace_back("providers.segmenter", scalar_field(&RunConfig::segmenter));
    t.emplace_back("providers.describer", scalar_field(&RunConfig::describer));
    t.emplace_back("providers.text_encoder", scalar_field(&RunConfig::text_encoder));
    t.emplace_back("toggles.mhf", scalar_field(&RunConfig::mhf));
    t.emplace_back("toggles.mllm", scalar_field(&RunConfig::mllm));
    t.emplace_back("toggles.rsa_bias", scalar_field(&RunConfig::rsa_bias));
    for (Dimension d : kDimensions)
      t.emplace_back("dims." + std::string(dimension_name(d)), dim_field(static_cast<std::size_t>(d)));
    t.emplace_back("prompt.content", scalar_field(&RunConfig::prompt_content));
    t.emplace_back("prompt.level", scalar_field(&RunConfig::prompt_level));
    t.emplace_back("prompt.score", scalar_field(&RunConfig::prompt_score));
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

DescriptionFields RunConfig::description_fields() const {
  DescriptionFields f;
  f.descriptions = mllm;
  f.content = prompt_content;
  f.level = prompt_level;
  f.score = prompt_score;
  f.dims = dims;
  return f;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  f->set(*this, key, trim(value));
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  need(regions >= 2, "model.regions (L) must be at least 2");
  need(regions <= 255, "model.regions (L) must fit an 8-bit mask");
  need(channels.size() >= 2, "model.channels needs at least two backbone blocks");
  for (std::size_t c : channels) need(c > 0, "model.channels entries must be positive");
  need(height > 0 && width > 0, "model.height and model.width must be positive");
  const std::size_t factor = std::size_t{1} << channels.size();
  need(height % factor == 0 && width % factor == 0,
       "model.height and model.width must be divisible by 2^n = " + std::to_string(factor));
  need(fused_channels > 0 && guide_channels > 0 && text_dim > 0 && max_tokens > 0 && vocab > 0 && mlp_hidden > 0,
       "model sizes must be positive");
  need(heads > 0 && fused_channels % heads == 0, "model.heads must divide model.fused_channels");
  need(lambda_init >= 0.0, "model.lambda_init must be non-negative");
  need(batch_size > 0, "train.batch_size must be positive");
  need(lr >= 0.0 && weight_decay >= 0.0 && eta_min >= 0.0, "learning rates and weight decay must be non-negative");
  need(t_max > 0, "train.t_max must be positive");
  for (double r : split) need(r >= 0.0, "train.split ratios must be non-negative");
  need(std::abs(split[0] + split[1] + split[2] - 1.0) < 1e-9, "train.split ratios must sum to 1");
  need(split[0] > 0.0, "train.split needs a training share");
  need(segmenter == "kmeans", "providers.segmenter must be \"kmeans\"");
  need(describer == "heuristic" || describer == "remote", "providers.describer must be \"heuristic\" or \"remote\"");
  need(text_encoder == "hashed", "providers.text_encoder must be \"hashed\"");
}

std::string RunConfig::to_toml() const {
  std::string out, section;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + field.get(*this) + "\n";
  }
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& [key, field] : fields()) k.push_back(key);
  return k;
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::stringstream in(text);
  std::string raw, section;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    c.set(section.empty() ? key : section + "." + key, line.substr(eq + 1));
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "override '" + a + "' is not key=value");
    std::string value = trim(a.substr(eq + 1));
    const std::string key = trim(a.substr(0, eq));
    // let shells drop the quotes around strings
    if (const Field* f = find_field(key); f && !value.empty() && value.front() != '"' && value.front() != '[') {
      const std::string current = f->get(config);
      if (!current.empty() && current.front() == '"') value = "\"" + value + "\"";
    }
    config.set(key, value);
  }
}

}  // namespace rsfiqa
