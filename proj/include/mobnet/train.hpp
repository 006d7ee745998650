#pragma once

// TBPTT training of a group network with Adam and a linear warm-down LR
// schedule. Trajectories are processed in lockstep batches: the hidden state
// is carried (detached) across truncation windows within each trajectory and
// reset between trajectories. Single-threaded and bitwise deterministic for
// a fixed seed.

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobnet/dataset.hpp"
#include "mobnet/gru.hpp"

namespace mobnet {

struct TrainConfig {
  int epochs = 200;
  int batch = 64;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double lr_start = 0.05, lr_end = 0.0005;
  int lr_decay_epochs = 100;  // linear decay span, constant afterwards
  double clip_norm = 1.0;
  bool clip = true;
  uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch < 1) throw std::invalid_argument("train config: epochs/batch >= 1");
    if (lr_end <= 0.0 || lr_end > lr_start)
      throw std::invalid_argument("train config: need 0 < lr_end <= lr_start");
  }
};

inline double lr_at(const TrainConfig& c, int epoch) {
  if (epoch >= c.lr_decay_epochs) return c.lr_end;
  return c.lr_start + (c.lr_end - c.lr_start) * static_cast<double>(epoch) /
                          static_cast<double>(c.lr_decay_epochs);
}

struct TrainResult {
  Network net;
  std::vector<double> train_loss, val_loss;  // per epoch
};

namespace detail {

// streaming NLL over full trajectories (hidden carried, loss per tick)
inline double eval_nll(const Network& net, const std::vector<Trajectory>& trajs) {
  double total = 0.0;
  long ticks = 0;
  for (const auto& tr : trajs) {
    MatX h = MatX::Zero(net.cfg.d_h, 1);
    for (Eigen::Index k = 0; k < tr.X.cols(); ++k) {
      const MatX x = net.normalize(tr.X.col(k));
      h = gru_forward(net.layout, net.theta, x, h);
      MatX mu, sigma;
      head_forward(net.layout, net.theta, net.cfg.sigma_min, h, mu, sigma);
      total += gaussian_nll(mu, sigma, tr.Y.col(k));
      ++ticks;
    }
  }
  return ticks > 0 ? total / static_cast<double>(ticks) : 0.0;
}

}  // namespace detail

inline TrainResult train(const GroupDataset& ds, const NetworkConfig& net_cfg,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train.empty()) throw std::invalid_argument("train: empty training set");
  if (net_cfg.d_in != ds.d_in)
    throw std::invalid_argument("train: config width " + std::to_string(net_cfg.d_in) +
                                " != dataset width " + std::to_string(ds.d_in));

  // standardize targets over the training split; the head learns in
  // standardized units and NetState::step scales back at inference
  VecX y_mean = VecX::Zero(ds.n_g);
  long y_total = 0;
  for (const auto& tr : ds.train) {
    y_mean += tr.Y.rowwise().sum();
    y_total += tr.Y.cols();
  }
  y_mean /= static_cast<double>(y_total);
  VecX y_var = VecX::Zero(ds.n_g);
  for (const auto& tr : ds.train)
    y_var += (tr.Y.colwise() - y_mean).cwiseAbs2().rowwise().sum();
  y_var /= static_cast<double>(y_total);
  VecX y_std(ds.n_g);
  for (int i = 0; i < ds.n_g; ++i) y_std[i] = y_var[i] > 1e-12 ? std::sqrt(y_var[i]) : 1.0;
  GroupDataset sds = ds;
  for (auto* split : {&sds.train, &sds.val})
    for (auto& tr : *split)
      tr.Y = (tr.Y.colwise() - y_mean).array().colwise() / y_std.array();

  TrainResult res;
  res.net = Network::init(net_cfg, cfg.seed);
  res.net.feat_mean = ds.feat_mean;
  res.net.feat_std = ds.feat_std;
  res.net.targ_mean = y_mean;
  res.net.targ_std = y_std;
  Network& net = res.net;
  const NetLayout& L = net.layout;
  const int dh = net_cfg.d_h, h_len = net_cfg.horizon;

  VecX m = VecX::Zero(L.total), v = VecX::Zero(L.total);
  long adam_t = 0;
  double best_val = std::numeric_limits<double>::infinity();
  VecX best_theta = net.theta;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> order(sds.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long updates = 0;

    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const int B = static_cast<int>(std::min<size_t>(cfg.batch, order.size() - b0));
      Eigen::Index T = sds.train[order[b0]].X.cols();
      for (int i = 1; i < B; ++i) T = std::min(T, sds.train[order[b0 + i]].X.cols());

      MatX hidden = MatX::Zero(dh, B);
      for (Eigen::Index w = 0; w < T; w += h_len) {
        const int steps = static_cast<int>(std::min<Eigen::Index>(h_len, T - w));
        const double scale = 1.0 / static_cast<double>(B * steps);

        // forward over the window, caching activations
        std::vector<GruStepCache> caches(steps);
        std::vector<MatX> hs(steps), mus(steps), sigmas(steps), zss(steps), ys(steps);
        MatX h = hidden;
        double loss = 0.0;
        for (int s = 0; s < steps; ++s) {
          MatX x(ds.d_in, B), y(ds.n_g, B);
          for (int i = 0; i < B; ++i) {
            const Trajectory& tr = sds.train[order[b0 + i]];
            x.col(i) = net.normalize(tr.X.col(w + s));
            y.col(i) = tr.Y.col(w + s);
          }
          h = gru_forward(L, net.theta, x, h, &caches[s]);
          head_forward(L, net.theta, net.cfg.sigma_min, h, mus[s], sigmas[s], &zss[s]);
          hs[s] = h;
          ys[s] = y;
          loss += gaussian_nll(mus[s], sigmas[s], y) / steps;
        }
        if (!std::isfinite(loss))
          throw std::runtime_error("train: NaN loss, epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(b0 / cfg.batch) + " window " +
                                   std::to_string(w / h_len));
        epoch_loss += loss;
        ++updates;
        hidden = h;  // detached carry into the next window

        // backward through the window
        VecX grad = VecX::Zero(L.total);
        MatX dh_next = MatX::Zero(dh, B);
        for (int s = steps - 1; s >= 0; --s) {
          MatX dh_s = dh_next + head_nll_backward(L, net.theta, net.cfg.sigma_min, hs[s],
                                                  mus[s], sigmas[s], zss[s], ys[s], scale,
                                                  grad);
          dh_next = gru_backward(L, net.theta, caches[s], dh_s, grad);
        }

        if (cfg.clip) {
          const double n = grad.norm();
          if (n > cfg.clip_norm) grad *= cfg.clip_norm / n;
        }

        // Adam
        ++adam_t;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
        net.theta -= (lr / bc1) * m.cwiseQuotient(
                         ((v / bc2).cwiseSqrt().array() + cfg.adam_eps).matrix());
      }
    }

    res.train_loss.push_back(updates > 0 ? epoch_loss / updates : 0.0);
    res.val_loss.push_back(sds.val.empty() ? res.train_loss.back()
                                           : detail::eval_nll(net, sds.val));
    if (res.val_loss.back() <= best_val) {
      best_val = res.val_loss.back();
      best_theta = net.theta;
    }
  }
  net.theta = best_theta;  // keep the best-validation epoch
  return res;
}

}  // namespace mobnet
