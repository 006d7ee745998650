#pragma once

// Streaming IIR building blocks: biquad sections (direct form II transposed),
// 2nd-order Butterworth low/high-pass via the bilinear transform, and the
// [2, 15] Hz band-pass cascade used by the MOB-fric-BPF baseline.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mobnet/model.hpp"

namespace mobnet {

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;  // y = b x - a y, a0 = 1
  double s1 = 0, s2 = 0;

  double step(double x) {
    const double y = b0 * x + s1;
    s1 = b1 * x - a1 * y + s2;
    s2 = b2 * x - a2 * y;
    return y;
  }
  void reset() { s1 = s2 = 0; }
};

inline Biquad butter2_lowpass(double fc, double fs) {
  if (fc <= 0.0 || fs <= 2.0 * fc) throw std::invalid_argument("butter2: need 0 < fc < fs/2");
  const double K = std::tan(M_PI * fc / fs);
  const double norm = 1.0 / (1.0 + std::sqrt(2.0) * K + K * K);
  Biquad q;
  q.b0 = K * K * norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (K * K - 1.0) * norm;
  q.a2 = (1.0 - std::sqrt(2.0) * K + K * K) * norm;
  return q;
}

inline Biquad butter2_highpass(double fc, double fs) {
  if (fc <= 0.0 || fs <= 2.0 * fc) throw std::invalid_argument("butter2: need 0 < fc < fs/2");
  const double K = std::tan(M_PI * fc / fs);
  const double norm = 1.0 / (1.0 + std::sqrt(2.0) * K + K * K);
  Biquad q;
  q.b0 = norm;
  q.b1 = -2.0 * norm;
  q.b2 = norm;
  q.a1 = 2.0 * (K * K - 1.0) * norm;
  q.a2 = (1.0 - std::sqrt(2.0) * K + K * K) * norm;
  return q;
}

// multichannel band-pass: HP(f_lo) then LP(f_hi) per channel
struct BandPass {
  std::vector<Biquad> hp, lp;

  BandPass(int channels, double f_lo, double f_hi, double fs) {
    if (f_lo >= f_hi) throw std::invalid_argument("bandpass: need f_lo < f_hi");
    hp.assign(channels, butter2_highpass(f_lo, fs));
    lp.assign(channels, butter2_lowpass(f_hi, fs));
  }

  VecX step(const VecX& x) {
    VecX y(x.size());
    for (int i = 0; i < x.size(); ++i) y[i] = lp[i].step(hp[i].step(x[i]));
    return y;
  }
  void reset() {
    for (auto& q : hp) q.reset();
    for (auto& q : lp) q.reset();
  }
};

// multichannel one-pole low-pass with cutoff fc (exponential discretization)
struct OnePoleLPF {
  double alpha = 0.0;
  VecX y;

  OnePoleLPF(int channels, double fc, double fs)
      : alpha(1.0 - std::exp(-2.0 * M_PI * fc / fs)), y(VecX::Zero(channels)) {}

  const VecX& step(const VecX& x) {
    y += alpha * (x - y);
    return y;
  }
  void reset() { y.setZero(); }
};

}  // namespace mobnet
