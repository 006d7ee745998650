#pragma once

// SimLog serialization: columnar CSV plus a JSON metadata sidecar
// (<path>.meta.json) carrying seed, config hash, and collision annotations.
//
// Column order: t, q*, qd*, qdd*, q_m*, qd_m*, tau_d*, tau_applied*,
// imu0..imu11, tau_e*, tau_u*, contact*, expected_contact*, collision
// where * blocks have n_v (or n_contact) entries.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/simulator.hpp"

namespace mobnet {

namespace detail {

inline void csv_block(std::string& line, const char* name, int n) {
  for (int i = 0; i < n; ++i) {
    line += ',';
    line += name;
    line += std::to_string(i);
  }
}

inline void csv_vals(std::string& line, const VecX& v) {
  char buf[32];
  for (int i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v[i]);
    line += buf;
  }
}

}  // namespace detail

inline void write_simlog(const SimLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw SimError("cannot write " + path);
  const int n = log.n_v();
  const int nc = log.ticks.empty() ? 0 : static_cast<int>(log.ticks[0].contact.size());

  std::string line = "t";
  for (const char* b : {"q", "qd", "qdd", "q_m", "qd_m", "tau_d", "tau_applied"})
    detail::csv_block(line, b, n);
  detail::csv_block(line, "imu", 12);
  for (const char* b : {"tau_e", "tau_u"}) detail::csv_block(line, b, n);
  for (const char* b : {"contact", "expected_contact"}) detail::csv_block(line, b, nc);
  line += ",collision";
  f << line << '\n';

  char buf[32];
  for (const auto& tk : log.ticks) {
    line.clear();
    std::snprintf(buf, sizeof(buf), "%.17g", tk.t);
    line += buf;
    for (const VecX* v : {&tk.q, &tk.qd, &tk.qdd, &tk.q_m, &tk.qd_m, &tk.tau_d, &tk.tau_applied})
      detail::csv_vals(line, *v);
    detail::csv_vals(line, tk.imu);
    for (const VecX* v : {&tk.tau_e, &tk.tau_u}) detail::csv_vals(line, *v);
    for (bool b : tk.contact) line += b ? ",1" : ",0";
    for (bool b : tk.expected_contact) line += b ? ",1" : ",0";
    line += tk.collision ? ",1" : ",0";
    f << line << '\n';
  }

  json meta;
  meta["schema_version"] = 1;
  meta["seed"] = log.seed;
  meta["model"] = log.model_name;
  meta["config_hash"] = log.config_hash;
  meta["dt"] = log.dt;
  meta["n_v"] = n;
  meta["n_contacts"] = nc;
  meta["n_ticks"] = log.ticks.size();
  meta["collisions"] = json::array();
  for (const auto& c : log.collisions)
    meta["collisions"].push_back({{"t0", c.t0},
                                  {"t1", c.t1},
                                  {"joint", c.joint},
                                  {"link", c.link},
                                  {"magnitude", c.magnitude}});
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw SimError("cannot write " + path + ".meta.json");
  mf << meta.dump(2) << '\n';
}

inline SimLog read_simlog(const std::string& path) {
  std::ifstream mf(path + ".meta.json");
  if (!mf) throw SimError("cannot read " + path + ".meta.json");
  json meta = json::parse(mf);
  const int n = meta["n_v"].get<int>();
  const int nc = meta["n_contacts"].get<int>();

  SimLog log;
  log.dt = meta["dt"].get<double>();
  log.seed = meta["seed"].get<uint64_t>();
  log.model_name = meta["model"].get<std::string>();
  log.config_hash = meta.value("config_hash", "");
  for (const auto& c : meta["collisions"])
    log.collisions.push_back({c["t0"].get<double>(), c["t1"].get<double>(),
                              c["joint"].get<int>(), c["link"].get<std::string>(),
                              c["magnitude"].get<double>()});

  std::ifstream f(path);
  if (!f) throw SimError("cannot read " + path);
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    SimTick tk;
    const char* p = line.c_str();
    char* end = nullptr;
    auto next = [&]() {
      const double v = std::strtod(p, &end);
      p = (*end == ',') ? end + 1 : end;
      return v;
    };
    tk.t = next();
    for (VecX* v : {&tk.q, &tk.qd, &tk.qdd, &tk.q_m, &tk.qd_m, &tk.tau_d, &tk.tau_applied}) {
      v->resize(n);
      for (int i = 0; i < n; ++i) (*v)[i] = next();
    }
    for (int i = 0; i < 12; ++i) tk.imu[i] = next();
    for (VecX* v : {&tk.tau_e, &tk.tau_u}) {
      v->resize(n);
      for (int i = 0; i < n; ++i) (*v)[i] = next();
    }
    tk.contact.resize(nc);
    for (int i = 0; i < nc; ++i) tk.contact[i] = next() != 0.0;
    tk.expected_contact.resize(nc);
    for (int i = 0; i < nc; ++i) tk.expected_contact[i] = next() != 0.0;
    tk.collision = next() != 0.0;
    log.ticks.push_back(std::move(tk));
  }
  return log;
}

}  // namespace mobnet
