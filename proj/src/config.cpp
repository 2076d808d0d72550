#include "ulfine/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ulfine/error.hpp"

namespace ulfine {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    // Allow simple ratios such as 1/50 for imbalance settings.
    const auto slash = v.find('/');
    if (slash != std::string::npos) {
      const double num = parse_double(key, v.substr(0, slash));
      const double den = parse_double(key, v.substr(slash + 1));
      if (den == 0.0) throw ConfigError("config key '" + key + "': zero denominator");
      return num / den;
    }
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

struct Binding {
  std::function<void(TrainConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Field>
Binding double_binding(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); },
          [field](const TrainConfig& c) { return format_double(field(c)); }};
}

template <typename T, typename Field>
Binding uint_binding(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<T>(parse_uint(k, v));
          },
          [field](const TrainConfig& c) { return std::to_string(field(c)); }};
}

template <typename Field>
Binding bool_binding(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); },
          [field](const TrainConfig& c) { return std::string(field(c) ? "true" : "false"); }};
}

#define ULF_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::map<std::string, Binding>& registry() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    t["train.arm"] = {[](TrainConfig& c, const std::string&, const std::string& v) { c.arm = v; },
                      [](const TrainConfig& c) { return c.arm; }};
    t["train.seed"] = uint_binding<std::uint64_t>(ULF_FIELD(seed));
    t["train.iterations"] = uint_binding<std::uint64_t>(ULF_FIELD(iterations));
    t["train.batch_labeled"] = uint_binding<std::size_t>(ULF_FIELD(batch_labeled));
    t["train.batch_unlabeled"] = uint_binding<std::size_t>(ULF_FIELD(batch_unlabeled));
    t["train.eval_every"] = uint_binding<std::uint64_t>(ULF_FIELD(eval_every));
    t["train.learning_rate"] = double_binding(ULF_FIELD(learning_rate));
    t["train.momentum"] = double_binding(ULF_FIELD(momentum));
    t["train.weight_decay"] = double_binding(ULF_FIELD(weight_decay));

    t["model.rank"] = uint_binding<std::size_t>(ULF_FIELD(model.rank));
    t["model.adapter_scale"] = double_binding(ULF_FIELD(model.adapter_scale));
    t["model.probe_init"] = double_binding(ULF_FIELD(model.probe_init));
    t["model.freeze_adapter"] = bool_binding(ULF_FIELD(model.freeze_adapter));

    t["paf.mu"] = double_binding(ULF_FIELD(paf.mu));
    t["paf.visual_momentum"] = double_binding(ULF_FIELD(paf.visual_momentum));
    t["paf.dist_momentum"] = double_binding(ULF_FIELD(paf.dist_momentum));
    t["paf.orthogonal_weight"] = double_binding(ULF_FIELD(paf.orthogonal_weight));
    t["paf.update_dist_before_alpha"] = bool_binding(ULF_FIELD(paf.update_dist_before_alpha));

    t["fusion.eta"] = double_binding(ULF_FIELD(fusion.eta));
    t["fusion.temperature"] = double_binding(ULF_FIELD(fusion.temperature));
    t["fusion.mask_threshold"] = double_binding(ULF_FIELD(fusion.mask_threshold));
    t["fusion.la_strength"] = double_binding(ULF_FIELD(fusion.la_strength));
    t["fusion.range_epsilon"] = double_binding(ULF_FIELD(fusion.range_epsilon));
    t["fusion.mask_source"] = {
        [](TrainConfig& c, const std::string&, const std::string& v) { c.fusion.mask_source = parse_mask_source(v); },
        [](const TrainConfig& c) { return to_string(c.fusion.mask_source); }};

    t["augment.weak_sigma"] = double_binding(ULF_FIELD(augment.weak_sigma));
    t["augment.strong_sigma"] = double_binding(ULF_FIELD(augment.strong_sigma));
    t["augment.strong_dropout"] = double_binding(ULF_FIELD(augment.strong_dropout));
    t["augment.renormalize"] = bool_binding(ULF_FIELD(augment.renormalize));

    t["metrics.head_min"] = uint_binding<std::size_t>(ULF_FIELD(groups.head_min));
    t["metrics.tail_max"] = uint_binding<std::size_t>(ULF_FIELD(groups.tail_max));
    t["metrics.stability_mode"] = {
        [](TrainConfig& c, const std::string&, const std::string& v) { c.stability_mode = parse_stability_mode(v); },
        [](const TrainConfig& c) { return to_string(c.stability_mode); }};

    t["data.classes"] = uint_binding<std::size_t>(ULF_FIELD(data.classes));
    t["data.dim"] = uint_binding<std::size_t>(ULF_FIELD(data.dim));
    t["data.separation"] = double_binding(ULF_FIELD(data.separation));
    t["data.noise_sigma"] = double_binding(ULF_FIELD(data.noise_sigma));
    t["data.text_noise"] = double_binding(ULF_FIELD(data.text_noise));
    t["data.text_mode"] = {[](TrainConfig& c, const std::string& k, const std::string& v) {
                             if (v == "aligned") {
                               c.data.text_mode = TextPrototypeMode::kAligned;
                             } else if (v == "orthonormal") {
                               c.data.text_mode = TextPrototypeMode::kOrthonormal;
                             } else {
                               throw ConfigError("config key '" + k + "': expected aligned|orthonormal");
                             }
                           },
                           [](const TrainConfig& c) {
                             return std::string(c.data.text_mode == TextPrototypeMode::kAligned ? "aligned"
                                                                                                : "orthonormal");
                           }};
    t["data.test_per_class"] = uint_binding<std::size_t>(ULF_FIELD(data.test_per_class));
    t["data.head_labeled"] = uint_binding<std::size_t>(ULF_FIELD(data.split.head_labeled));
    t["data.labeled_imbalance"] = double_binding(ULF_FIELD(data.split.labeled_imbalance));
    t["data.head_unlabeled"] = uint_binding<std::size_t>(ULF_FIELD(data.split.head_unlabeled));
    t["data.unlabeled_imbalance"] = double_binding(ULF_FIELD(data.split.unlabeled_imbalance));
    t["data.unlabeled_mode"] = {
        [](TrainConfig& c, const std::string&, const std::string& v) {
          c.data.split.unlabeled_mode = parse_unlabeled_mode(v);
        },
        [](const TrainConfig& c) { return to_string(c.data.split.unlabeled_mode); }};
    return t;
  }();
  return table;
}

#undef ULF_FIELD

}  // namespace

void TrainConfig::validate() const {
  if (batch_labeled < 1 || batch_unlabeled < 1) throw ConfigError("train: batch sizes must be at least 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be at least 1");
  if (learning_rate < 0.0) throw ConfigError("train.learning_rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (model.rank >= data.dim && !model.freeze_adapter) throw ConfigError("model.rank must be smaller than data.dim");
  paf.validate();
  augment.validate();
  groups.validate();
  if (fusion.eta < 0.0 || fusion.eta > 1.0) throw ConfigError("fusion.eta must lie in [0,1]");
  if (!(fusion.temperature > 0.0)) throw ConfigError("fusion.temperature must be positive");
  if (data.classes < 2) throw ConfigError("data.classes must be at least 2");
  if (data.dim < 2) throw ConfigError("data.dim must be at least 2");
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = registry();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
  if (key == "data.classes") cfg.data.split.class_count = cfg.data.classes;
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::map<std::string, std::string> config_map(const TrainConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, binding] : registry()) out[key] = binding.get(cfg);
  return out;
}

std::string config_text(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, value] : config_map(cfg)) os << key << " = " << value << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, binding] : registry()) keys.push_back(key);
  return keys;
}

}  // namespace ulfine
