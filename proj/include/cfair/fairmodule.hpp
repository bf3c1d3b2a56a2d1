#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cfair/centroids.hpp"

namespace cfair {

/// Parameters of the residual embedding module: a (d, 2d, d) MLP applied to
/// the normalized input with a shortcut connection, plus K learnable
/// centroids. All 64-bit.
///
///   g(x) = n + W2 * relu(W1 * n + b1) + b2,   n = x / |x|
///
/// With zero MLP weights, g is the plain normalization, so module pseudo-scores
/// reproduce the pre-trained ones exactly.
struct ModuleParams {
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<double> w1;         // 2d x d
  std::vector<double> b1;         // 2d
  std::vector<double> w2;         // d x 2d
  std::vector<double> b2;         // d
  std::vector<double> centroids;  // k x d

  static ModuleParams zeros(std::size_t d, std::size_t k);

  std::span<const double> centroid(std::size_t identity) const {
    return {centroids.data() + identity * d, d};
  }
};

/// Gradients (and Adam moments) share the parameter shapes.
using ModuleGrads = ModuleParams;

/// Centroids copied from the pre-trained estimates; W2 and both biases zero,
/// so the module output at init IS the normalized input, bit-exactly. W1 gets
/// small fixed noise: an all-zero MLP is a permanent gradient saddle (neither
/// weight matrix could ever train), while nonzero first-layer activations let
/// W2 grow away from the identity when the loss asks for it. Deterministic.
ModuleParams init_from_pretrained(const CentroidSet& cs);

std::vector<double> forward(const ModuleParams& p, std::span<const double> x);

/// cos(g(x), mu_k) in [-1, 1].
double module_pseudo_score(const ModuleParams& p, std::span<const double> x,
                           std::size_t identity);

/// Intermediates of one forward pass, reusable for backprop.
struct ForwardTrace {
  std::vector<double> unit_input;  // n
  std::vector<double> pre_act;     // W1 n + b1
  std::vector<double> hidden;      // relu(pre_act)
  std::vector<double> output;      // g(x)
};

void forward_into(const ModuleParams& p, std::span<const double> x, ForwardTrace& t);

/// Accumulates residual_grad * d cos(g(x), mu_k) / d params into `acc`.
/// The cosine gradient w.r.t. u is v/(|u||v|) - cos(u,v) * u/|u|^2 (and
/// symmetrically for v); the ReLU subgradient at 0 is 0.
void backward_accumulate(const ModuleParams& p, const ForwardTrace& t,
                         std::size_t identity, double residual_grad,
                         ModuleGrads& acc);

/// Backprop of an output-space cotangent through the MLP and shortcut only
/// (centroid gradients are handled separately). Exposed because per-pair
/// cotangents of one image may be summed before a single chain pass; the
/// chain is linear in them once the trace is fixed.
void backprop_output_grad(const ModuleParams& p, const ForwardTrace& t,
                          std::span<const double> output_grad, ModuleGrads& acc);

ModuleGrads backward(const ModuleParams& p, std::span<const double> x,
                     std::size_t identity, double residual_grad);

struct AdamState {
  ModuleGrads m;  // first moments
  ModuleGrads v;  // second moments
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ModuleParams& p);
};

/// One bias-corrected Adam update over every parameter block, centroids
/// included. Throws NumericError on non-finite gradient entries.
void adam_step(ModuleParams& p, AdamState& state, const ModuleGrads& grads,
               double learning_rate);

/// checkpoint.bin (all parameter matrices, f64 little-endian) +
/// checkpoint.json {d, k, epoch, loss}; round-trips bit-exactly.
void save_checkpoint(const ModuleParams& p, std::uint64_t epoch, double loss,
                     const std::filesystem::path& dir);

struct Checkpoint {
  ModuleParams params;
  std::uint64_t epoch = 0;
  double loss = 0.0;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cfair
