// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctkd/frontend/features.hpp"

namespace ctkd::frontend {

struct FrontendConfig {
  double sample_rate = 16000.0;
  double window = 0.025;  // seconds
  double hop = 0.010;     // seconds
  std::size_t num_mel = 64;
  std::size_t num_ceps = 40;
  double log_floor = 1e-10;
  double preemphasis = 0.97;
  std::size_t fft_size = 512;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  void validate() const;
};

/// Number of frames compute_mfcc yields for `samples` input samples.
std::size_t mfcc_frame_count(std::size_t samples, const FrontendConfig& config);

/// Pre-emphasis, Hamming window, |FFT|, mel filterbank, log with floor, DCT-II.
FeatureMatrix compute_mfcc(std::span<const double> waveform, const FrontendConfig& config = {});

/// Triangular filters over the magnitude bins [0, fft_size/2], HTK mel scale.
/// Returns num_mel rows of fft_size/2+1 weights.
std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& config);

/// Centre frequency in Hz of each mel filter.
std::vector<double> mel_centers_hz(const FrontendConfig& config);

/// Log mel energies only (everything before the DCT), frames x num_mel.
FeatureMatrix compute_log_mel(std::span<const double> waveform, const FrontendConfig& config = {});

}  // namespace ctkd::frontend
