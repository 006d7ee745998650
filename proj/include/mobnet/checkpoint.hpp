#pragma once

// Versioned JSON checkpoint for a group network: config, input
// standardization, and named parameter tensors (shape + row-major values).
// Round-trips bitwise (JSON doubles use shortest-exact formatting).

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/gru.hpp"

namespace mobnet {

namespace detail {

inline json tensor_json(const std::string& name, const MatX& m) {
  json t;
  t["name"] = name;
  t["shape"] = {m.rows(), m.cols()};
  std::vector<double> vals;
  vals.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) vals.push_back(m(r, c));
  t["data"] = vals;
  return t;
}

inline MatX tensor_from_json(const json& t, Eigen::Index rows, Eigen::Index cols) {
  if (t["shape"][0].get<Eigen::Index>() != rows || t["shape"][1].get<Eigen::Index>() != cols)
    throw std::invalid_argument("checkpoint: tensor " + t["name"].get<std::string>() +
                                " has unexpected shape");
  const auto& vals = t["data"];
  if (static_cast<Eigen::Index>(vals.size()) != rows * cols)
    throw std::invalid_argument("checkpoint: tensor data size mismatch");
  MatX m(rows, cols);
  size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = vals[i++].get<double>();
  return m;
}

}  // namespace detail

inline void save_checkpoint(const Network& net, const std::string& group_id,
                            const std::string& path) {
  json doc;
  doc["format"] = "mobnet-checkpoint";
  doc["version"] = 1;
  doc["group"] = group_id;
  doc["config"] = {{"d_in", net.cfg.d_in},
                   {"d_h", net.cfg.d_h},
                   {"n_g", net.cfg.n_g},
                   {"horizon", net.cfg.horizon},
                   {"sigma_min", net.cfg.sigma_min}};
  std::vector<double> mean(net.feat_mean.data(), net.feat_mean.data() + net.feat_mean.size());
  std::vector<double> std_(net.feat_std.data(), net.feat_std.data() + net.feat_std.size());
  doc["norm"] = {{"mean", mean}, {"std", std_}};
  std::vector<double> ymean(net.targ_mean.data(), net.targ_mean.data() + net.targ_mean.size());
  std::vector<double> ystd(net.targ_std.data(), net.targ_std.data() + net.targ_std.size());
  doc["target_norm"] = {{"mean", ymean}, {"std", ystd}};

  const NetLayout& l = net.layout;
  doc["tensors"] = json::array();
  doc["tensors"].push_back(detail::tensor_json("gru.Wx", nets::Wx(l, net.theta)));
  doc["tensors"].push_back(detail::tensor_json("gru.Wh", nets::Wh(l, net.theta)));
  doc["tensors"].push_back(detail::tensor_json("gru.bx", nets::bx(l, net.theta)));
  doc["tensors"].push_back(detail::tensor_json("gru.bh", nets::bh(l, net.theta)));
  doc["tensors"].push_back(detail::tensor_json("head.W", nets::Wy(l, net.theta)));
  doc["tensors"].push_back(detail::tensor_json("head.b", nets::by(l, net.theta)));

  std::ofstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f << doc.dump(1) << '\n';
}

inline Network load_checkpoint(const std::string& path, std::string* group_id = nullptr) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  json doc = json::parse(f);
  if (doc.value("format", "") != "mobnet-checkpoint" || doc.value("version", 0) != 1)
    throw std::invalid_argument("checkpoint: unsupported format/version in " + path);
  if (group_id) *group_id = doc.value("group", "");

  NetworkConfig cfg;
  cfg.d_in = doc["config"]["d_in"].get<int>();
  cfg.d_h = doc["config"]["d_h"].get<int>();
  cfg.n_g = doc["config"]["n_g"].get<int>();
  cfg.horizon = doc["config"]["horizon"].get<int>();
  cfg.sigma_min = doc["config"]["sigma_min"].get<double>();
  cfg.validate();

  Network net;
  net.cfg = cfg;
  net.layout = NetLayout::make(cfg);
  net.theta = VecX::Zero(net.layout.total);

  const auto mean = doc["norm"]["mean"].get<std::vector<double>>();
  const auto std_ = doc["norm"]["std"].get<std::vector<double>>();
  if (static_cast<int>(mean.size()) != cfg.d_in || static_cast<int>(std_.size()) != cfg.d_in)
    throw std::invalid_argument("checkpoint: normalization width mismatch");
  net.feat_mean = Eigen::Map<const VecX>(mean.data(), cfg.d_in);
  net.feat_std = Eigen::Map<const VecX>(std_.data(), cfg.d_in);

  net.targ_mean = VecX::Zero(cfg.n_g);
  net.targ_std = VecX::Ones(cfg.n_g);
  if (doc.contains("target_norm")) {
    const auto ymean = doc["target_norm"]["mean"].get<std::vector<double>>();
    const auto ystd = doc["target_norm"]["std"].get<std::vector<double>>();
    if (static_cast<int>(ymean.size()) != cfg.n_g || static_cast<int>(ystd.size()) != cfg.n_g)
      throw std::invalid_argument("checkpoint: target normalization width mismatch");
    net.targ_mean = Eigen::Map<const VecX>(ymean.data(), cfg.n_g);
    net.targ_std = Eigen::Map<const VecX>(ystd.data(), cfg.n_g);
  }

  std::map<std::string, const json*> by_name;
  for (const auto& t : doc["tensors"]) by_name[t["name"].get<std::string>()] = &t;
  auto need = [&](const char* name) -> const json& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::invalid_argument(std::string("checkpoint: missing tensor ") + name);
    return *it->second;
  };
  const NetLayout& l = net.layout;
  nets::Wx(l, net.theta) = detail::tensor_from_json(need("gru.Wx"), 3 * cfg.d_h, cfg.d_in);
  nets::Wh(l, net.theta) = detail::tensor_from_json(need("gru.Wh"), 3 * cfg.d_h, cfg.d_h);
  nets::bx(l, net.theta) = detail::tensor_from_json(need("gru.bx"), 3 * cfg.d_h, 1);
  nets::bh(l, net.theta) = detail::tensor_from_json(need("gru.bh"), 3 * cfg.d_h, 1);
  nets::Wy(l, net.theta) = detail::tensor_from_json(need("head.W"), 2 * cfg.n_g, cfg.d_h);
  nets::by(l, net.theta) = detail::tensor_from_json(need("head.b"), 2 * cfg.n_g, 1);
  return net;
}

inline void write_curves(const std::vector<double>& train_loss,
                         const std::vector<double>& val_loss, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("curves: cannot write " + path);
  f << "epoch,train_nll,val_nll\n";
  char buf[96];
  for (size_t e = 0; e < train_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, train_loss[e],
                  e < val_loss.size() ? val_loss[e] : train_loss[e]);
    f << buf;
  }
}

}  // namespace mobnet
