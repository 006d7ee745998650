#pragma once

// Single-layer GRU cell with a linear head emitting a mean block and a
// softplus variance block, trained with the Gaussian negative log-likelihood
//   L = ln(sigma^2) + (mu - y)^2 / sigma^2
// summed over joints, averaged over batch and unrolled steps. Parameters
// live in one flat vector so the optimizer and checkpoints stay trivial;
// gate layout follows the common (reset, update, candidate) stacking:
//   r = sig(W_ir x + b_ir + W_hr h + b_hr)
//   z = sig(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r .* (W_hn h + b_hn))
//   h' = (1 - z) .* n + z .* h

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "mobnet/model.hpp"

namespace mobnet {

struct NetworkConfig {
  int d_in = 0;      // input feature width
  int d_h = 0;       // hidden width
  int n_g = 0;       // joints in the group; output width is 2*n_g
  int horizon = 50;  // TBPTT unroll length, ticks
  double sigma_min = 1e-6;

  void validate() const {
    if (d_in < 1 || d_h < 1 || n_g < 1 || horizon < 1)
      throw std::invalid_argument("network config: widths and horizon must be >= 1");
    if (sigma_min <= 0.0) throw std::invalid_argument("network config: sigma_min must be > 0");
  }
};

// flat parameter layout: [Wx (3dh x din) | Wh (3dh x dh) | bx | bh | Wy (2ng x dh) | by]
struct NetLayout {
  int d_in = 0, d_h = 0, n_out = 0;
  int wx = 0, wh = 0, bx = 0, bh = 0, wy = 0, by = 0, total = 0;

  static NetLayout make(const NetworkConfig& c) {
    NetLayout l;
    l.d_in = c.d_in;
    l.d_h = c.d_h;
    l.n_out = 2 * c.n_g;
    l.wx = 0;
    l.wh = l.wx + 3 * c.d_h * c.d_in;
    l.bx = l.wh + 3 * c.d_h * c.d_h;
    l.bh = l.bx + 3 * c.d_h;
    l.wy = l.bh + 3 * c.d_h;
    l.by = l.wy + l.n_out * c.d_h;
    l.total = l.by + l.n_out;
    return l;
  }
};

namespace nets {

using CMap = Eigen::Map<const MatX>;
using Map = Eigen::Map<MatX>;

inline CMap Wx(const NetLayout& l, const VecX& t) { return {t.data() + l.wx, 3 * l.d_h, l.d_in}; }
inline CMap Wh(const NetLayout& l, const VecX& t) { return {t.data() + l.wh, 3 * l.d_h, l.d_h}; }
inline CMap bx(const NetLayout& l, const VecX& t) { return {t.data() + l.bx, 3 * l.d_h, 1}; }
inline CMap bh(const NetLayout& l, const VecX& t) { return {t.data() + l.bh, 3 * l.d_h, 1}; }
inline CMap Wy(const NetLayout& l, const VecX& t) { return {t.data() + l.wy, l.n_out, l.d_h}; }
inline CMap by(const NetLayout& l, const VecX& t) { return {t.data() + l.by, l.n_out, 1}; }
inline Map Wx(const NetLayout& l, VecX& t) { return {t.data() + l.wx, 3 * l.d_h, l.d_in}; }
inline Map Wh(const NetLayout& l, VecX& t) { return {t.data() + l.wh, 3 * l.d_h, l.d_h}; }
inline Map bx(const NetLayout& l, VecX& t) { return {t.data() + l.bx, 3 * l.d_h, 1}; }
inline Map bh(const NetLayout& l, VecX& t) { return {t.data() + l.bh, 3 * l.d_h, 1}; }
inline Map Wy(const NetLayout& l, VecX& t) { return {t.data() + l.wy, l.n_out, l.d_h}; }
inline Map by(const NetLayout& l, VecX& t) { return {t.data() + l.by, l.n_out, 1}; }

inline MatX sigmoid(const MatX& x) { return (0.5 * (x.array() / 2.0).tanh() + 0.5).matrix(); }

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace nets

// activations for one time step, batch in columns
struct GruStepCache {
  MatX x, h_prev, r, z, n, hn_lin;  // hn_lin = W_hn h_prev + b_hn
};

// h_prev (d_h x B), x (d_in x B) -> h_t; fills the cache when given
inline MatX gru_forward(const NetLayout& l, const VecX& theta, const MatX& x,
                        const MatX& h_prev, GruStepCache* cache = nullptr) {
  const int dh = l.d_h;
  const MatX ax = (nets::Wx(l, theta) * x).colwise() + nets::bx(l, theta).col(0);
  const MatX ah = (nets::Wh(l, theta) * h_prev).colwise() + nets::bh(l, theta).col(0);
  const MatX r = nets::sigmoid(ax.topRows(dh) + ah.topRows(dh));
  const MatX z = nets::sigmoid(ax.middleRows(dh, dh) + ah.middleRows(dh, dh));
  const MatX hn_lin = ah.bottomRows(dh);
  const MatX n = (ax.bottomRows(dh) + r.cwiseProduct(hn_lin)).array().tanh().matrix();
  MatX h = (MatX::Ones(dh, x.cols()) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (cache) *cache = {x, h_prev, r, z, n, hn_lin};
  return h;
}

// accumulates parameter gradients into g; returns dL/dh_prev given dL/dh_t
inline MatX gru_backward(const NetLayout& l, const VecX& theta, const GruStepCache& c,
                         const MatX& dh, VecX& g) {
  const int dhn = l.d_h;
  const MatX ones = MatX::Ones(dhn, dh.cols());
  const MatX dz = dh.cwiseProduct(c.h_prev - c.n);
  const MatX dn = dh.cwiseProduct(ones - c.z);
  const MatX dn_pre = dn.cwiseProduct(ones - c.n.cwiseAbs2());
  const MatX dr = dn_pre.cwiseProduct(c.hn_lin);
  const MatX dhn_lin = dn_pre.cwiseProduct(c.r);
  const MatX dr_pre = dr.cwiseProduct(c.r).cwiseProduct(ones - c.r);
  const MatX dz_pre = dz.cwiseProduct(c.z).cwiseProduct(ones - c.z);

  MatX gx(3 * dhn, dh.cols()), gh(3 * dhn, dh.cols());
  gx << dr_pre, dz_pre, dn_pre;
  gh << dr_pre, dz_pre, dhn_lin;

  nets::Wx(l, g) += gx * c.x.transpose();
  nets::Wh(l, g) += gh * c.h_prev.transpose();
  nets::bx(l, g).col(0) += gx.rowwise().sum();
  nets::bh(l, g).col(0) += gh.rowwise().sum();
  return dh.cwiseProduct(c.z) + nets::Wh(l, theta).transpose() * gh;
}

// linear head: mu rows then the pre-softplus variance rows
inline void head_forward(const NetLayout& l, const VecX& theta, double sigma_min,
                         const MatX& h, MatX& mu, MatX& sigma, MatX* zs_out = nullptr) {
  const int ng = l.n_out / 2;
  MatX y = (nets::Wy(l, theta) * h).colwise() + nets::by(l, theta).col(0);
  mu = y.topRows(ng);
  MatX zs = y.bottomRows(ng);
  sigma = zs.unaryExpr([&](double v) { return std::max(nets::softplus(v), sigma_min); });
  if (zs_out) *zs_out = zs;
}

// Gaussian NLL summed over joints, averaged over columns: mean_b sum_j
// [ 2 ln sigma + (mu - y)^2 / sigma^2 ]
inline double gaussian_nll(const MatX& mu, const MatX& sigma, const MatX& target) {
  const MatX e = mu - target;
  const double s =
      (2.0 * sigma.array().log() + e.array().square() / sigma.array().square()).sum();
  return s / static_cast<double>(mu.cols());
}

// backward of scale * gaussian_nll through the head; accumulates into g and
// returns dL/dh
inline MatX head_nll_backward(const NetLayout& l, const VecX& theta, double sigma_min,
                              const MatX& h, const MatX& mu, const MatX& sigma,
                              const MatX& zs, const MatX& target, double scale, VecX& g) {
  const int ng = l.n_out / 2;
  const MatX e = mu - target;
  const MatX dmu = scale * 2.0 * e.cwiseQuotient(sigma.cwiseAbs2());
  MatX dsig = scale * (2.0 * sigma.cwiseInverse() -
                       2.0 * e.cwiseAbs2().cwiseQuotient(sigma.array().cube().matrix()));
  // softplus derivative, zero where the clip is active
  MatX dzs(ng, h.cols());
  for (int j = 0; j < dzs.rows(); ++j)
    for (int b = 0; b < dzs.cols(); ++b) {
      const double sp = nets::softplus(zs(j, b));
      dzs(j, b) = sp > sigma_min ? dsig(j, b) / (1.0 + std::exp(-zs(j, b))) : 0.0;
    }
  MatX dy(l.n_out, h.cols());
  dy << dmu, dzs;
  nets::Wy(l, g) += dy * h.transpose();
  nets::by(l, g).col(0) += dy.rowwise().sum();
  return nets::Wy(l, theta).transpose() * dy;
}

// trained network: config, parameters, input standardization
struct Network {
  NetworkConfig cfg;
  NetLayout layout;
  VecX theta;
  VecX feat_mean, feat_std;  // applied as (x - mean) / std before the GRU
  VecX targ_mean, targ_std;  // head outputs live in standardized target units

  static Network init(const NetworkConfig& cfg, uint64_t seed) {
    cfg.validate();
    Network n;
    n.cfg = cfg;
    n.layout = NetLayout::make(cfg);
    n.theta = VecX::Zero(n.layout.total);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = n.layout.wx; i < n.layout.bx; ++i) n.theta[i] = u(rng);  // Wx, Wh
    for (int i = n.layout.wy; i < n.layout.by; ++i) n.theta[i] = u(rng);  // Wy
    n.feat_mean = VecX::Zero(cfg.d_in);
    n.feat_std = VecX::Ones(cfg.d_in);
    n.targ_mean = VecX::Zero(cfg.n_g);
    n.targ_std = VecX::Ones(cfg.n_g);
    return n;
  }

  VecX normalize(const VecX& x) const {
    return (x - feat_mean).cwiseQuotient(feat_std);
  }
};

// stateful streaming inference (hidden carried across ticks, reset per episode)
struct NetState {
  VecX h;
  explicit NetState(const Network& n) : h(VecX::Zero(n.cfg.d_h)) {}

  void step(const Network& n, const VecX& x_raw, VecX& mu, VecX& sigma) {
    const VecX x = n.normalize(x_raw);
    h = gru_forward(n.layout, n.theta, x, h);
    MatX m, s;
    head_forward(n.layout, n.theta, n.cfg.sigma_min, h, m, s);
    mu = m.col(0).cwiseProduct(n.targ_std) + n.targ_mean;
    sigma = s.col(0).cwiseProduct(n.targ_std);
  }
};

}  // namespace mobnet
