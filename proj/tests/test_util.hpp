// tests/test_util.hpp
//
// Shared helpers for the training-level tests: small synthetic setups and a
// nearest-mean oracle network built directly from the generator's emission
// means.

#pragma once

#include <vector>

#include "fsam/corpus.hpp"
#include "fsam/network.hpp"

namespace testutil {

// The generator derives state means from its seed before anything else; the
// same draws recover them.
inline std::vector<fsam::Vector> recover_means(const fsam::SyntheticSpec& spec, int num_states) {
  fsam::Rng rng(spec.seed);
  std::vector<fsam::Vector> means(num_states);
  for (int s = 0; s < num_states; ++s) {
    means[s] = fsam::Vector(spec.dim);
    for (int d = 0; d < spec.dim; ++d) means[s](d) = spec.mean_scale * rng.gauss();
  }
  return means;
}

// Single softmax layer whose argmax is the nearest state mean:
// logit_s = scale * (2 x . mu_s - |mu_s|^2). With delta-augmented input the
// extra columns get zero weight.
inline fsam::Network oracle_network(const std::vector<fsam::Vector>& means, int input_dim,
                                    double scale = 50.0) {
  const int S = static_cast<int>(means.size());
  const int D = static_cast<int>(means.front().size());
  fsam::Network net;
  net.layers.resize(1);
  net.layers[0].weights = fsam::Matrix::Zero(S, input_dim);
  net.layers[0].bias = fsam::Vector::Zero(S);
  for (int s = 0; s < S; ++s) {
    for (int d = 0; d < D; ++d) net.layers[0].weights(s, d) = scale * 2.0 * means[s](d);
    net.layers[0].bias(s) = -scale * means[s].squaredNorm();
  }
  return net;
}

}  // namespace testutil
