#pragma once

// Metrics CSV, trajectory traces (JSON lines), parameter checkpoints and run manifests.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uavtrack/config.hpp"
#include "uavtrack/mappo.hpp"
#include "uavtrack/rollout.hpp"

namespace uavtrack {

using nlohmann::json;

inline const char* kMetricsHeader = "episode,mean_reward,TE,violations_c7,violations_c8,repairs_invoked";

// One CSV row; aggregate files carry across-seed means, hence doubles.
struct MetricsRow {
  double episode = 0.0;
  double mean_reward = 0.0;
  double te = 0.0;
  double violations_c7 = 0.0;
  double violations_c8 = 0.0;
  double repairs_invoked = 0.0;
};

inline MetricsRow to_row(const EpisodeMetrics& m) {
  return {static_cast<double>(m.episode), m.mean_reward, m.te, static_cast<double>(m.violations_c7),
          static_cast<double>(m.violations_c8), static_cast<double>(m.repairs_invoked)};
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& r : rows)
    os << format_number(r.episode) << ',' << format_number(r.mean_reward) << ',' << format_number(r.te) << ','
       << format_number(r.violations_c7) << ',' << format_number(r.violations_c8) << ','
       << format_number(r.repairs_invoked) << '\n';
  return os.str();
}

inline std::string metrics_csv(const std::vector<EpisodeMetrics>& metrics) {
  std::vector<MetricsRow> rows;
  for (const auto& m : metrics) rows.push_back(to_row(m));
  return metrics_csv(rows);
}

/// Trailing moving average; the first window-1 points average what is available.
inline std::vector<double> smooth(const std::vector<double>& series, int window) {
  std::vector<double> out(series.size());
  const auto w = static_cast<std::size_t>(std::max(window, 1));
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t k = lo; k <= i; ++k) sum += series[k];
    out[i] = sum / static_cast<double>(i - lo + 1);
  }
  return out;
}

/// Per-episode mean across seeds (runs truncated to the shortest).
inline std::vector<MetricsRow> aggregate_runs(const std::vector<std::vector<EpisodeMetrics>>& runs) {
  std::vector<MetricsRow> out;
  if (runs.empty()) return out;
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  for (std::size_t e = 0; e < len; ++e) {
    MetricsRow row;
    row.episode = static_cast<double>(e);
    for (const auto& r : runs) {
      const MetricsRow x = to_row(r[e]);
      row.mean_reward += x.mean_reward;
      row.te += x.te;
      row.violations_c7 += x.violations_c7;
      row.violations_c8 += x.violations_c8;
      row.repairs_invoked += x.repairs_invoked;
    }
    const double k = 1.0 / static_cast<double>(runs.size());
    row.mean_reward *= k;
    row.te *= k;
    row.violations_c7 *= k;
    row.violations_c8 *= k;
    row.repairs_invoked *= k;
    out.push_back(row);
  }
  return out;
}

inline std::vector<MetricsRow> smooth_rows(const std::vector<MetricsRow>& rows, int window) {
  auto column = [&](auto member) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*member);
    return smooth(v, window);
  };
  const auto reward = column(&MetricsRow::mean_reward);
  const auto te = column(&MetricsRow::te);
  const auto c7 = column(&MetricsRow::violations_c7);
  const auto c8 = column(&MetricsRow::violations_c8);
  const auto rep = column(&MetricsRow::repairs_invoked);
  std::vector<MetricsRow> out = rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i].mean_reward = reward[i];
    out[i].te = te[i];
    out[i].violations_c7 = c7[i];
    out[i].violations_c8 = c8[i];
    out[i].repairs_invoked = rep[i];
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- trajectory traces -------------------------------------------------------

inline json world_to_json(const WorldState& w) {
  json uavs = json::array();
  for (const auto& u : w.uavs)
    uavs.push_back({{"x", u.pos.x()}, {"y", u.pos.y()}, {"mode", u.last_mode == RadarMode::Active ? 1 : 0}});
  json targets = json::array();
  for (const auto& t : w.targets)
    targets.push_back({{"x", t.pos.x()},
                       {"y", t.pos.y()},
                       {"vx", t.vel.x()},
                       {"vy", t.vel.y()},
                       {"jammer", t.has_jammer ? 1 : 0}});
  return {{"k", w.k}, {"uavs", uavs}, {"targets", targets}};
}

inline WorldState world_from_json(const json& j) {
  WorldState w;
  w.k = j.at("k").get<int>();
  for (const auto& u : j.at("uavs")) {
    const int mode = u.at("mode").get<int>();
    if (mode != 0 && mode != 1) throw Error(ErrorCode::Io, "trace mode must be 0 or 1");
    w.uavs.push_back({Vec2(u.at("x").get<double>(), u.at("y").get<double>()),
                      mode == 1 ? RadarMode::Active : RadarMode::Passive});
  }
  for (const auto& t : j.at("targets")) {
    TargetState ts;
    ts.pos = Vec2(t.at("x").get<double>(), t.at("y").get<double>());
    ts.vel = Vec2(t.value("vx", 0.0), t.value("vy", 0.0));
    ts.has_jammer = t.at("jammer").get<int>() == 1;
    w.targets.push_back(ts);
  }
  return w;
}

inline std::string trace_header(const ExperimentConfig& cfg, std::uint64_t seed, const WorldState& initial,
                                const std::string& policy_name) {
  json h = {{"type", "header"},
            {"format", "uavtrack-trace"},
            {"version", 1},
            {"n_uav", cfg.scenario.n_uav},
            {"m_target", cfg.scenario.m_target},
            {"horizon", cfg.scenario.horizon},
            {"seed", seed},
            {"policy", policy_name},
            {"config_hash", config_hash(cfg)},
            {"initial", world_to_json(initial)}};
  return h.dump();
}

inline std::string trace_record(const TrackingEnv& env, const StepOutcome& step) {
  json rec = world_to_json(env.world());
  rec["type"] = "step";
  rec["lb"] = step.lb;
  rec["lb_clamped"] = step.lb_clamped;
  json rewards = json::array();
  for (const auto& r : step.rewards) rewards.push_back(r.total);
  rec["rewards"] = rewards;
  json preds = json::array();
  for (const auto& p : env.predictions())
    preds.push_back({{"x", p.pos_pred.x()}, {"y", p.pos_pred.y()}, {"sigma", p.sigma_pred}});
  rec["predictions"] = preds;
  rec["repairs"] = step.repairs_invoked;
  return rec.dump();
}

// ---- checkpoints ------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'U', 'A', 'V', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_hash;
  PolicyNet policy;
  ValueNet value;
  ValueNorm value_norm;
};

namespace detail {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorCode::Io, "truncated checkpoint");
  return v;
}

inline void put_mlp(std::ostream& os, const nn::Mlp<Scalar>& mlp) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(mlp.sizes().size()));
  for (int s : mlp.sizes()) put<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  for (const auto& l : mlp.params()) {
    os.write(reinterpret_cast<const char*>(l.w.data()), static_cast<std::streamsize>(l.w.size() * sizeof(Scalar)));
    os.write(reinterpret_cast<const char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(Scalar)));
  }
}

inline nn::Mlp<Scalar> get_mlp(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n < 2 || n > 64) throw Error(ErrorCode::Io, "corrupt checkpoint layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n; ++i) sizes.push_back(static_cast<int>(get<std::uint32_t>(is)));
  nn::Mlp<Scalar> mlp(sizes);
  for (auto& l : mlp.params()) {
    is.read(reinterpret_cast<char*>(l.w.data()), static_cast<std::streamsize>(l.w.size() * sizeof(Scalar)));
    is.read(reinterpret_cast<char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(Scalar)));
    if (!is) throw Error(ErrorCode::Io, "truncated checkpoint");
  }
  return mlp;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const LearnerState& learner, const std::string& hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write checkpoint '" + path + "'");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(hash.size()));
  os.write(hash.data(), static_cast<std::streamsize>(hash.size()));
  detail::put_mlp(os, learner.policy.mlp());
  detail::put_mlp(os, learner.value.mlp());
  detail::put<double>(os, learner.value_norm.count);
  detail::put<double>(os, learner.value_norm.mean);
  detail::put<double>(os, learner.value_norm.m2);
  if (!os) throw Error(ErrorCode::Io, "write failed for checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw Error(ErrorCode::Io, "not a uavtrack checkpoint: '" + path + "'");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw Error(ErrorCode::Io, "unsupported checkpoint version");
  const auto hash_len = detail::get<std::uint32_t>(is);
  if (hash_len > 256) throw Error(ErrorCode::Io, "corrupt checkpoint header");
  Checkpoint ck;
  ck.config_hash.resize(hash_len);
  is.read(ck.config_hash.data(), hash_len);
  ck.policy.mlp() = detail::get_mlp(is);
  ck.value.mlp() = detail::get_mlp(is);
  ck.value_norm.count = detail::get<double>(is);
  ck.value_norm.mean = detail::get<double>(is);
  ck.value_norm.m2 = detail::get<double>(is);
  return ck;
}

/// Loads a checkpoint and checks that it was trained under `cfg`.
inline Checkpoint load_checkpoint_for(const std::string& path, const ExperimentConfig& cfg) {
  Checkpoint ck = load_checkpoint(path);
  const std::string expected = config_hash(cfg);
  if (ck.config_hash != expected)
    throw Error(ErrorCode::HashMismatch, "checkpoint config hash " + ck.config_hash + " != " + expected);
  const int pdim = policy_input_dim(cfg.scenario.n_uav, cfg.scenario.m_target);
  if (ck.policy.input_dim() != pdim) throw Error(ErrorCode::HashMismatch, "checkpoint policy input size mismatch");
  return ck;
}

}  // namespace uavtrack
