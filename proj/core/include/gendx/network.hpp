#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gendx/matrix.hpp"
#include "gendx/rng.hpp"

namespace gendx {

enum class Activation { relu, identity, exp, logistic };

inline constexpr double kLayerNormEps = 1e-5;

/// One fully-connected layer: linear over [input | aux], then optional layer
/// normalization (learnable gain/bias, epsilon 1e-5), then the activation.
/// `aux_dim` extra inputs (e.g. a one-hot label) are concatenated after the
/// layer's regular input.
struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t aux_dim = 0;
    bool layer_norm = false;
    Activation activation = Activation::identity;
};

enum class RunMode { train, eval };

/// Feedforward network with analytic backward pass.  Parameters flatten per
/// layer as [weights row-major | bias | ln_gain | ln_bias]; gradients use the
/// same layout.  The layer-norm backward is exact, including the epsilon term.
class FeedForward {
public:
    struct Layer {
        LayerSpec spec;
        Matrix weight;   // out_dim x (in_dim + aux_dim)
        Vector bias;     // out_dim
        Vector ln_gain;  // out_dim when layer_norm, else empty
        Vector ln_bias;
    };

    /// Forward intermediates needed by backward().  Reused across calls to
    /// avoid reallocation in training loops.
    struct Cache {
        struct PerLayer {
            Vector input;       // concatenated [input | aux], post-mask for layer 0
            Vector normalized;  // layer-norm x-hat (empty without layer norm)
            double inv_std = 0.0;
            Vector output;
        };
        std::vector<PerLayer> layers;
        Vector input_mask;  // empty when no mask was applied

        // scratch for backward()
        Vector d_act, d_linear, d_input, d_carry;
    };

    FeedForward() = default;

    /// Weights ~ N(0, weight_std^2), biases 0, layer-norm gain 1 / bias 0.
    static FeedForward init(std::vector<LayerSpec> specs, double weight_std, RngStream& rng);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::size_t input_dim() const { return layers_.front().spec.in_dim; }
    std::size_t output_dim() const { return layers_.back().spec.out_dim; }

    std::size_t param_count() const;
    void get_params(std::span<double> out) const;
    void set_params(std::span<const double> in);

    /// Runs the network.  `aux` supplies one span per layer (empty spans where
    /// the layer has aux_dim 0).  `input_mask`, if non-empty, is multiplied
    /// into the input; it is ignored in eval mode.  Returns the output; fills
    /// `cache` when given (required later by backward()).
    Vector forward(std::span<const double> input,
                   std::span<const std::span<const double>> aux,
                   std::span<const double> input_mask,
                   RunMode mode,
                   Cache* cache) const;

    /// Convenience forward without aux or mask, in eval mode.
    Vector forward(std::span<const double> input) const;

    /// Accumulates (+=) parameter gradients for the given output gradient
    /// into `param_grads` (layout as get_params).  If `input_grad` is
    /// non-null it receives d loss / d input, chained through the input mask
    /// recorded in the cache; gradients for aux inputs are discarded.
    void backward(Cache& cache,
                  std::span<const double> output_grad,
                  std::span<double> param_grads,
                  Vector* input_grad) const;

private:
    std::vector<Layer> layers_;
};

}  // namespace gendx
