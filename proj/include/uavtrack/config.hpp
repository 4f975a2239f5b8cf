#pragma once

// Experiment configuration: one INI section per module. Every key has a
// default; unknown sections or keys are rejected.

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uavtrack/crlb.hpp"
#include "uavtrack/mappo.hpp"
#include "uavtrack/predictor.hpp"
#include "uavtrack/sa_repair.hpp"
#include "uavtrack/scenario.hpp"

namespace uavtrack {

struct ExperimentSettings {
  int seeds = 10;
  int eval_episodes = 10;
  int smoothing_window = 50;

  void validate() const {
    if (seeds < 0) throw Error(ErrorCode::ConfigInvalid, "seeds must be >= 0");
    if (eval_episodes < 0) throw Error(ErrorCode::ConfigInvalid, "eval_episodes must be >= 0");
    if (smoothing_window < 1) throw Error(ErrorCode::ConfigInvalid, "smoothing_window must be >= 1");
  }
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  FactorTable factors;
  PredictorConfig predictor;
  SaConfig sa;
  TrainConfig train;
  ExperimentSettings experiment;

  void validate() const {
    scenario.validate();
    predictor.validate();
    sa.validate();
    train.validate();
    experiment.validate();
    auto positive = [](double f, const char* what) {
      if (!(f > 0.0)) throw Error(ErrorCode::ConfigInvalid, std::string(what) + " must be positive");
    };
    positive(factors.active_default().f_range, "f_range");
    positive(factors.active_default().f_bearing, "f_bearing");
    positive(factors.passive_default().f_doa, "f_doa");
    for (const auto& [key, f] : factors.active_overrides()) {
      positive(f.f_range, "f_range override");
      positive(f.f_bearing, "f_bearing override");
    }
    for (const auto& [key, f] : factors.passive_overrides()) positive(f.f_doa, "f_doa override");
  }
};

inline std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

inline std::string format_number(long long x) { return std::to_string(x); }

namespace detail {

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw Error(ErrorCode::ConfigInvalid, "key '" + key + "': not a number: '" + text + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw Error(ErrorCode::ConfigInvalid, "key '" + key + "': not an integer: '" + text + "'");
  return v;
}

// Binds each key of a section to a field for parsing and dumping.
struct FieldTable {
  struct Field {
    std::function<void(const std::string&)> read;
    std::function<std::string()> write;
  };
  std::vector<std::pair<std::string, Field>> fields;

  void real(const std::string& key, double& ref) {
    fields.push_back({key, {[&ref, key](const std::string& s) { ref = parse_double(key, s); },
                            [&ref] { return format_number(ref); }}});
  }
  void integer(const std::string& key, int& ref) {
    fields.push_back({key, {[&ref, key](const std::string& s) { ref = parse_int<int>(key, s); },
                            [&ref] { return std::to_string(ref); }}});
  }
  void u64(const std::string& key, std::uint64_t& ref) {
    fields.push_back({key, {[&ref, key](const std::string& s) { ref = parse_int<std::uint64_t>(key, s); },
                            [&ref] { return std::to_string(ref); }}});
  }
  const Field* find(const std::string& key) const {
    for (const auto& [k, f] : fields)
      if (k == key) return &f;
    return nullptr;
  }
};

inline std::map<std::string, FieldTable> field_tables(ExperimentConfig& c) {
  std::map<std::string, FieldTable> t;
  auto& s = t["scenario"];
  s.integer("n_uav", c.scenario.n_uav);
  s.integer("m_target", c.scenario.m_target);
  s.integer("horizon", c.scenario.horizon);
  s.real("p_jammer", c.scenario.p_jammer);
  s.real("d0", c.scenario.d0);
  s.real("d1", c.scenario.d1);
  s.real("d2", c.scenario.d2);
  s.real("uav_ring_radius", c.scenario.uav_ring_radius);
  s.real("r_min", c.scenario.r_min);
  s.real("r_max", c.scenario.r_max);
  s.real("theta_min", c.scenario.theta_min);
  s.real("theta_max", c.scenario.theta_max);
  s.real("v_min", c.scenario.v_min);
  s.real("v_max", c.scenario.v_max);
  s.real("theta_v_min", c.scenario.theta_v_min);
  s.real("theta_v_max", c.scenario.theta_v_max);
  s.real("drive_noise_std", c.scenario.drive_noise_std);
  s.real("alpha", c.scenario.alpha);
  s.real("penalty_m", c.scenario.penalty_m);
  s.real("lb_ceiling", c.scenario.lb_ceiling);

  auto& f = t["crlb"];
  f.real("f_range", c.factors.active_default().f_range);
  f.real("f_bearing", c.factors.active_default().f_bearing);
  f.real("f_doa", c.factors.passive_default().f_doa);

  auto& p = t["predictor"];
  p.real("measurement_std", c.predictor.measurement_std);
  p.real("process_std", c.predictor.process_std);
  p.real("sigma_prior", c.predictor.sigma_prior);

  auto& a = t["sa"];
  a.real("t_max", c.sa.t_max);
  a.real("t_min", c.sa.t_min);
  a.integer("iters", c.sa.iters);
  a.real("big_l", c.sa.big_l);
  a.real("neighbor_move_std", c.sa.neighbor_move_std);
  a.real("mode_flip_prob", c.sa.mode_flip_prob);
  a.real("global_jump_prob", c.sa.global_jump_prob);
  a.real("halo_penalty", c.sa.halo_penalty);

  auto& r = t["train"];
  r.real("lr", c.train.lr);
  r.real("gamma", c.train.gamma);
  r.real("gae_lambda", c.train.gae_lambda);
  r.real("clip_eps", c.train.clip_eps);
  r.integer("epochs_per_update", c.train.epochs_per_update);
  r.integer("minibatch", c.train.minibatch);
  r.integer("rollout_len", c.train.rollout_len);
  r.integer("total_episodes", c.train.total_episodes);
  r.u64("seed", c.train.seed);
  r.integer("hidden_layers", c.train.hidden_layers);
  r.integer("hidden_units", c.train.hidden_units);
  r.real("ent_coef", c.train.ent_coef);
  r.real("value_coef", c.train.value_coef);
  r.real("max_grad_norm", c.train.max_grad_norm);
  r.real("position_scale", c.train.position_scale);
  r.real("init_log_std", c.train.init_log_std);

  auto& e = t["experiment"];
  e.integer("seeds", c.experiment.seeds);
  e.integer("eval_episodes", c.experiment.eval_episodes);
  e.integer("smoothing_window", c.experiment.smoothing_window);
  return t;
}

inline const std::vector<std::string>& section_order() {
  static const std::vector<std::string> order{"scenario", "crlb", "predictor", "sa", "train", "experiment"};
  return order;
}

// "f_range.<uav>.<target>" style per-pair factor override keys.
inline bool parse_override_key(const std::string& key, std::string& name, int& uav, int& target) {
  const auto p1 = key.find('.');
  if (p1 == std::string::npos) return false;
  const auto p2 = key.find('.', p1 + 1);
  if (p2 == std::string::npos) return false;
  name = key.substr(0, p1);
  if (name != "f_range" && name != "f_bearing" && name != "f_doa") return false;
  uav = parse_int<int>(key, key.substr(p1 + 1, p2 - p1 - 1));
  target = parse_int<int>(key, key.substr(p2 + 1));
  return uav >= 0 && target >= 0;
}

}  // namespace detail

/// Canonical text form: every section and key in fixed order, shortest round-trip numbers.
inline std::string dump_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  auto tables = detail::field_tables(copy);
  std::ostringstream os;
  bool first = true;
  for (const auto& section : detail::section_order()) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [key, field] : tables.at(section).fields) os << key << " = " << field.write() << '\n';
    if (section == "crlb") {
      for (const auto& [pair, f] : copy.factors.active_overrides()) {
        const std::string suffix = "." + std::to_string(pair.first) + "." + std::to_string(pair.second);
        os << "f_range" << suffix << " = " << format_number(f.f_range) << '\n';
        os << "f_bearing" << suffix << " = " << format_number(f.f_bearing) << '\n';
      }
      for (const auto& [pair, f] : copy.factors.passive_overrides())
        os << "f_doa." << pair.first << '.' << pair.second << " = " << format_number(f.f_doa) << '\n';
    }
  }
  return os.str();
}

inline ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  ExperimentConfig cfg;
  auto tables = detail::field_tables(cfg);
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty())
      throw Error(ErrorCode::ConfigInvalid, "key '" + section + "' outside of any section");
    auto it = tables.find(section);
    if (it == tables.end()) throw Error(ErrorCode::ConfigInvalid, "unknown section [" + section + "]");
    std::map<std::pair<int, int>, ActiveFactors> active;
    std::map<std::pair<int, int>, std::pair<bool, bool>> active_seen;
    for (const auto& [key, value] : node) {
      if (const auto* field = it->second.find(key)) {
        field->read(value.data());
        continue;
      }
      std::string name;
      int uav = 0;
      int target = 0;
      if (section == "crlb" && detail::parse_override_key(key, name, uav, target)) {
        const double v = detail::parse_double(key, value.data());
        if (name == "f_doa") {
          cfg.factors.set_passive_override(uav, target, PassiveFactor{v});
        } else {
          auto& f = active[{uav, target}];
          auto& seen = active_seen[{uav, target}];
          (name == "f_range" ? f.f_range : f.f_bearing) = v;
          (name == "f_range" ? seen.first : seen.second) = true;
        }
        continue;
      }
      throw Error(ErrorCode::ConfigInvalid, "unknown key '" + key + "' in [" + section + "]");
    }
    for (auto& [pair, f] : active) {
      // A partial override inherits the other factor from the run default.
      const auto seen = active_seen[pair];
      if (!seen.first) f.f_range = cfg.factors.active_default().f_range;
      if (!seen.second) f.f_bearing = cfg.factors.active_default().f_bearing;
      cfg.factors.set_active_override(pair.first, pair.second, f);
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Git blob-style SHA-1 ("blob <len>\0" + content), lowercase hex.
inline std::string content_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, blob.data(), blob.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorCode::Io, "SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return content_hash(dump_config(cfg)); }

}  // namespace uavtrack
