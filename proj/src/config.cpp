#include "tscl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tscl/error.hpp"
#include "tscl/util.hpp"

namespace tscl {

namespace {

std::string where(const std::string& section, const std::string& key) {
  return section + "." + key;
}

template <class T>
T parse_number(const std::string& text, const std::string& name) {
  const std::string s = boost::algorithm::trim_copy(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(name + ": cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& text, const std::string& name) {
  const std::string s = boost::algorithm::trim_copy(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(name + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    boost::algorithm::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(const std::string&, const std::string&)> set;  // (value, qualified name)
  std::function<std::string()> get;
};

template <class T>
Field number(const char* section, const char* key, T& ref) {
  return {section, key,
          [&ref](const std::string& v, const std::string& n) { ref = parse_number<T>(v, n); },
          [&ref] {
            if constexpr (std::is_floating_point_v<T>) return format_double(ref);
            else return std::to_string(ref);
          }};
}

Field boolean(const char* section, const char* key, bool& ref) {
  return {section, key,
          [&ref](const std::string& v, const std::string& n) { ref = parse_bool(v, n); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field path(const char* section, const char* key, std::filesystem::path& ref) {
  return {section, key,
          [&ref](const std::string& v, const std::string&) {
            ref = boost::algorithm::trim_copy(v);
          },
          [&ref] { return ref.string(); }};
}

template <class T>
Field number_list(const char* section, const char* key, std::vector<T>& ref) {
  return {section, key,
          [&ref](const std::string& v, const std::string& n) {
            std::vector<T> out;
            for (const auto& item : split_list(v)) out.push_back(parse_number<T>(item, n));
            ref = std::move(out);
          },
          [&ref] { return join(ref); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& m = c.pretrain.model;
  auto& a = c.pretrain.augment;
  auto& s = c.pretrain.ssl;
  auto& t = c.pretrain.train;
  auto& p = c.pretrain.probe;
  auto& f = c.finetune;
  return {
      {"run", "seed",
       [&c](const std::string& v, const std::string& n) {
         c.set_seed(parse_number<std::uint64_t>(v, n));
       },
       [&c] { return std::to_string(c.seed); }},
      path("data", "unlabeled", c.data.unlabeled),
      path("data", "train", c.data.train),
      path("data", "val", c.data.val),
      path("data", "test", c.data.test),
      number("synth", "n_classes", c.synth.n_classes),
      number("synth", "n_ts", c.synth.n_ts),
      number("synth", "t", c.synth.t),
      number("synth", "c", c.synth.c),
      number("synth", "noise_sigma", c.synth.noise_sigma),
      number("synth", "dropout_prob", c.synth.dropout_prob),
      number("synth", "time_shift", c.synth.time_shift),
      number("synth", "time_stretch", c.synth.time_stretch),
      number("synth", "amplitude_jitter", c.synth.amplitude_jitter),
      number("synth", "series_perturbation", c.synth.series_perturbation),
      number("synth", "spectral_variation", c.synth.spectral_variation),
      number("synth", "domain", c.synth.domain),
      number("synth", "domain_shift", c.synth.domain_shift),
      number("synth", "unlabeled_per_class", c.splits.unlabeled),
      number("synth", "train_per_class", c.splits.train),
      number("synth", "val_per_class", c.splits.val),
      number("synth", "test_per_class", c.splits.test),
      {"augment", "strategy",
       [&a](const std::string& v, const std::string&) {
         a.strategy = augment::parse_strategy(boost::algorithm::trim_copy(v));
       },
       [&a] { return augment::to_string(a.strategy); }},
      number("augment", "t_up", a.t_up),
      number("augment", "t_int_1", a.t_int_1),
      number("augment", "t_int_2", a.t_int_2),
      boolean("augment", "share_indices", a.share_indices),
      number("augment", "jitter_sigma", a.jitter_sigma),
      number("augment", "resize_low", a.resize_low),
      number("augment", "resize_high", a.resize_high),
      number("augment", "mask_ratio", a.mask_ratio),
      {"ssl", "framework",
       [&s](const std::string& v, const std::string&) {
         s.framework = ssl::parse_framework(boost::algorithm::trim_copy(v));
       },
       [&s] { return ssl::to_string(s.framework); }},
      number("ssl", "temperature", s.temperature),
      number("ssl", "momentum", s.momentum),
      number("ssl", "queue_capacity", s.queue_capacity),
      number("ssl", "vicreg_invariance", s.vicreg.invariance),
      number("ssl", "vicreg_variance", s.vicreg.variance),
      number("ssl", "vicreg_covariance", s.vicreg.covariance),
      number("ssl", "vicreg_gamma", s.vicreg.gamma),
      number("ssl", "vicreg_eps", s.vicreg.eps),
      number("ssl", "collapse_threshold", s.collapse_threshold),
      number("model", "in_channels", m.encoder.in_channels),
      number_list("model", "block_filters", m.encoder.block_filters),
      number_list("model", "kernel_sizes", m.encoder.kernel_sizes),
      number("model", "bn_momentum", m.encoder.bn_momentum),
      number("model", "bn_eps", m.encoder.bn_eps),
      number("model", "projection_hidden", m.projection_hidden),
      number("model", "projection_dim", m.projection_dim),
      number("model", "predictor_hidden", m.predictor_hidden),
      number("train", "total_steps", t.total_steps),
      number("train", "batch_size", t.batch_size),
      number("train", "base_lr", t.base_lr),
      number("train", "peak_lr", t.peak_lr),
      number("train", "final_lr", t.final_lr),
      number("train", "warmup_fraction", t.warmup_fraction),
      number("train", "weight_decay", t.weight_decay),
      number("train", "momentum", t.momentum),
      number("train", "group_size", t.group_size),
      number("train", "eval_every", t.eval_every),
      number("eval", "probe_c", p.c),
      number("eval", "probe_tolerance", p.tolerance),
      number("eval", "probe_max_iterations", p.max_iterations),
      number("eval", "head_epochs", f.head_epochs),
      number("eval", "full_epochs", f.full_epochs),
      number("eval", "head_lr", f.head_lr),
      number("eval", "encoder_lr", f.encoder_lr),
      number("eval", "finetune_weight_decay", f.weight_decay),
      number("eval", "finetune_batch_size", f.batch_size),
      number("eval", "head_hidden", f.hidden),
      number("eval", "head_dropout", f.dropout),
      number_list("sweep", "ks", c.sweep.ks),
      number("sweep", "repeats", c.sweep.repeats),
      {"sweep", "strategies",
       [&c](const std::string& v, const std::string&) {
         std::vector<std::string> out;
         for (const auto& name : split_list(v))
           out.push_back(augment::to_string(augment::parse_strategy(name)));
         c.sweep.strategies = std::move(out);
       },
       [&c] { return join(c.sweep.strategies); }},
      path("sweep", "checkpoint_dir", c.sweep.checkpoint_dir),
      boolean("sweep", "include_raw", c.sweep.include_raw),
  };
}

}  // namespace

RunConfig::RunConfig() { set_seed(seed); }

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  pretrain.train.seed = s;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  for (auto& f : fields(*this))
    if (section == f.section && key == f.key) {
      try {
        f.set(value, where(section, key));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError(where(section, key) + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key '" + where(section, key) + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      // Top-level `seed = N` is accepted as shorthand for [run] seed.
      if (name == "seed") {
        cfg.set("run", "seed", node.data());
        continue;
      }
      throw ConfigError("config key '" + name + "' outside any section");
    }
    for (const auto& [key, leaf] : node) cfg.set(name, key, leaf.data());
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::validate() const {
  try {
    synth.validate();
    pretrain.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  TSCL_REQUIRE(splits.total() >= 1, ConfigError, "synth split sizes are all zero");
  TSCL_REQUIRE(finetune.batch_size >= 2, ConfigError, "eval.finetune_batch_size must be >= 2");
  TSCL_REQUIRE(finetune.dropout >= 0.0 && finetune.dropout < 1.0, ConfigError,
               "eval.head_dropout must be in [0, 1)");
  TSCL_REQUIRE(finetune.head_lr > 0.0 && finetune.encoder_lr > 0.0, ConfigError,
               "eval finetuning learning rates must be positive");
  TSCL_REQUIRE(!sweep.ks.empty(), ConfigError, "sweep.ks is empty");
  for (auto k : sweep.ks) TSCL_REQUIRE(k >= 1, ConfigError, "sweep.ks entries must be >= 1");
  TSCL_REQUIRE(sweep.repeats >= 1, ConfigError, "sweep.repeats must be >= 1");
  std::set<std::string> seen;
  for (const auto& s : sweep.strategies)
    TSCL_REQUIRE(seen.insert(s).second, ConfigError, "sweep.strategies lists '" + s + "' twice");
}

std::string RunConfig::to_ini() const {
  auto& self = const_cast<RunConfig&>(*this);
  std::ostringstream os;
  std::string current;
  for (const auto& f : fields(self)) {
    if (current != f.section) {
      if (!current.empty()) os << '\n';
      current = f.section;
      os << '[' << current << "]\n";
    }
    os << f.key << " = " << f.get() << '\n';
  }
  return os.str();
}

std::string RunConfig::hash() const { return fnv1a_hex(to_ini()); }

}  // namespace tscl
