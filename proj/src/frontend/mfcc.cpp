// SPDX-License-Identifier: Apache-2.0
#include "ctkd/frontend/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fftw3.h>
#include <memory>
#include <numbers>

#include "ctkd/common/errors.hpp"

namespace ctkd::frontend {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Planner calls are not thread safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Owns an FFTW real-to-complex plan over fixed buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(fftw_alloc_real(n)),
        out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(make_plan(n, in_, out_)) {
    if (!in_ || !out_ || !plan_) throw NumericError("fftw: plan creation failed");
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    if (plan_) {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(out_);
    fftw_free(in_);
  }
  double* input() { return in_; }
  std::size_t size() const { return n_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  static fftw_plan make_plan(std::size_t n, double* in, fftw_complex* out) {
    if (!in || !out) return nullptr;
    std::lock_guard<std::mutex> lock(planner_mutex());
    return fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }

  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t f, std::size_t d, std::vector<double> v)
    : frames(f), dims(d), values(std::move(v)) {
  if (values.size() != f * d) throw ShapeError("feature matrix storage does not match frames x dims");
}

bool FeatureMatrix::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::size_t FrontendConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(window * sample_rate));
}

std::size_t FrontendConfig::hop_samples() const { return static_cast<std::size_t>(std::lround(hop * sample_rate)); }

void FrontendConfig::validate() const {
  if (!(sample_rate > 0) || window_samples() == 0 || hop_samples() == 0) {
    throw ConfigError("frontend: sample rate, window and hop must be positive");
  }
  if (hop > window) throw ConfigError("frontend: hop must not exceed window", "frontend.hop");
  if (num_ceps > num_mel) throw ConfigError("frontend: num_ceps must not exceed num_mel", "frontend.num_ceps");
  if (num_ceps == 0) throw ConfigError("frontend: num_ceps must be positive", "frontend.num_ceps");
  if (!(log_floor > 0)) throw ConfigError("frontend: log_floor must be positive", "frontend.log_floor");
  if (fft_size < window_samples() || (fft_size & (fft_size - 1)) != 0) {
    throw ConfigError("frontend: fft_size must be a power of two covering the window", "frontend.fft_size");
  }
}

std::size_t mfcc_frame_count(std::size_t samples, const FrontendConfig& config) {
  const std::size_t win = config.window_samples();
  if (samples < win) return 0;
  return 1 + (samples - win) / config.hop_samples();
}

std::vector<double> mel_centers_hz(const FrontendConfig& config) {
  const double top = hz_to_mel(config.sample_rate / 2.0);
  std::vector<double> centers(config.num_mel);
  for (std::size_t m = 0; m < config.num_mel; ++m) {
    centers[m] = mel_to_hz(top * static_cast<double>(m + 1) / static_cast<double>(config.num_mel + 1));
  }
  return centers;
}

std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& config) {
  const std::size_t bins = config.fft_size / 2 + 1;
  const double top = hz_to_mel(config.sample_rate / 2.0);
  std::vector<double> edges(config.num_mel + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(config.num_mel + 1));
  }
  std::vector<std::vector<double>> bank(config.num_mel, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < config.num_mel; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.fft_size);
      if (f > lo && f <= mid) {
        bank[m][k] = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        bank[m][k] = (hi - f) / (hi - mid);
      }
    }
  }
  return bank;
}

FeatureMatrix compute_log_mel(std::span<const double> waveform, const FrontendConfig& config) {
  config.validate();
  const std::size_t win = config.window_samples();
  const std::size_t hop = config.hop_samples();
  if (waveform.size() < win) {
    throw InputError("compute_mfcc: waveform has " + std::to_string(waveform.size()) +
                     " samples, shorter than one window of " + std::to_string(win));
  }
  const std::size_t frames = mfcc_frame_count(waveform.size(), config);

  std::vector<double> emphasized(waveform.size());
  emphasized[0] = waveform[0];
  for (std::size_t i = 1; i < waveform.size(); ++i) {
    emphasized[i] = waveform[i] - config.preemphasis * waveform[i - 1];
  }
  std::vector<double> hamming(win);
  for (std::size_t n = 0; n < win; ++n) {
    hamming[n] = win == 1 ? 1.0
                          : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                   static_cast<double>(win - 1));
  }
  const auto bank = mel_filterbank(config);
  const std::size_t bins = config.fft_size / 2 + 1;

  FeatureMatrix out(frames, config.num_mel);
  auto fft = std::make_unique<RealFft>(config.fft_size);
  double* buf = fft->input();
  std::vector<double> magnitude(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf, buf + fft->size(), 0.0);
    for (std::size_t n = 0; n < win; ++n) buf[n] = emphasized[f * hop + n] * hamming[n];
    fft->execute();
    for (std::size_t k = 0; k < bins; ++k) magnitude[k] = fft->magnitude(k);
    for (std::size_t m = 0; m < config.num_mel; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += bank[m][k] * magnitude[k];
      out.at(f, m) = std::log(std::max(e, config.log_floor));
    }
  }
  return out;
}

FeatureMatrix compute_mfcc(std::span<const double> waveform, const FrontendConfig& config) {
  const FeatureMatrix log_mel = compute_log_mel(waveform, config);
  const std::size_t mels = config.num_mel;
  FeatureMatrix out(log_mel.frames, config.num_ceps);
  // Orthonormal DCT-II.
  std::vector<double> basis(config.num_ceps * mels);
  for (std::size_t i = 0; i < config.num_ceps; ++i) {
    const double norm = std::sqrt((i == 0 ? 1.0 : 2.0) / static_cast<double>(mels));
    for (std::size_t m = 0; m < mels; ++m) {
      basis[i * mels + m] =
          norm * std::cos(std::numbers::pi * static_cast<double>(i) * (static_cast<double>(m) + 0.5) /
                          static_cast<double>(mels));
    }
  }
  for (std::size_t f = 0; f < log_mel.frames; ++f) {
    for (std::size_t i = 0; i < config.num_ceps; ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < mels; ++m) acc += basis[i * mels + m] * log_mel.at(f, m);
      out.at(f, i) = acc;
    }
  }
  return out;
}

}  // namespace ctkd::frontend
