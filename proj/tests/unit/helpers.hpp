#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ctkd/diffcore/tensor.hpp"
#include "ctkd/frontend/features.hpp"
#include "ctkd/model/config.hpp"
#include "ctkd/rnnt/lattice.hpp"

namespace ctkd::test {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::num_elements(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline rnnt::Lattice random_lattice(std::size_t t, std::size_t u, std::size_t v, std::mt19937_64& rng,
                                    double spread = 2.0) {
  std::normal_distribution<double> n(0.0, spread);
  std::vector<double> logits(t * (u + 1) * (v + 1));
  for (auto& x : logits) x = n(rng);
  return rnnt::Lattice::from_logits(t, u, v, logits);
}

inline rnnt::Lattice uniform_lattice(std::size_t t, std::size_t u, std::size_t v) {
  return rnnt::Lattice::from_logits(t, u, v, std::vector<double>(t * (u + 1) * (v + 1), 0.0));
}

inline frontend::FeatureMatrix random_features(std::size_t frames, std::size_t dims, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  frontend::FeatureMatrix f(frames, dims);
  for (auto& x : f.values) x = n(rng);
  return f;
}

/// Small streaming model used across the model, eval and train tests.
inline model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.feature_dim = 6;
  c.vocab_size = 3;
  c.joint_dim = 8;
  c.encoder.num_layers = 2;
  c.encoder.model_dim = 8;
  c.encoder.attention_heads = 2;
  c.encoder.ff_expansion = 2;
  c.encoder.conv_kernel = 3;
  c.encoder.pooling_layers = 1;
  c.encoder.max_positions = 64;
  c.decoder.num_layers = 1;
  c.decoder.hidden_dim = 8;
  return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ctkd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace ctkd::test
