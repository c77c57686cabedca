#include "gendx/network.hpp"

#include <cmath>
#include <stdexcept>

namespace gendx {

namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::identity: return x;
        case Activation::exp: return std::exp(x);
        case Activation::logistic: return 1.0 / (1.0 + std::exp(-x));
    }
    throw std::logic_error("unknown activation");
}

// Derivative expressed through the activation's own output.
double activate_grad_from_output(Activation a, double out) {
    switch (a) {
        case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
        case Activation::exp: return out;
        case Activation::logistic: return out * (1.0 - out);
    }
    throw std::logic_error("unknown activation");
}

}  // namespace

FeedForward FeedForward::init(std::vector<LayerSpec> specs, double weight_std, RngStream& rng) {
    if (specs.empty()) throw std::invalid_argument("FeedForward: no layers");
    if (!(weight_std >= 0.0)) throw std::invalid_argument("FeedForward: weight_std must be >= 0");
    for (std::size_t l = 0; l < specs.size(); ++l) {
        if (specs[l].in_dim == 0 || specs[l].out_dim == 0) {
            throw std::invalid_argument("FeedForward: layer " + std::to_string(l) + " has zero dim");
        }
        if (l > 0 && specs[l].in_dim != specs[l - 1].out_dim) {
            throw std::invalid_argument("FeedForward: layer " + std::to_string(l) +
                                        " in_dim does not chain from previous out_dim");
        }
    }
    FeedForward net;
    net.layers_.reserve(specs.size());
    for (const LayerSpec& spec : specs) {
        Layer layer;
        layer.spec = spec;
        const std::size_t fan_in = spec.in_dim + spec.aux_dim;
        layer.weight = Matrix(spec.out_dim, fan_in);
        for (double& w : layer.weight.data()) w = weight_std * rng.normal();
        layer.bias.assign(spec.out_dim, 0.0);
        if (spec.layer_norm) {
            layer.ln_gain.assign(spec.out_dim, 1.0);
            layer.ln_bias.assign(spec.out_dim, 0.0);
        }
        net.layers_.push_back(std::move(layer));
    }
    return net;
}

std::size_t FeedForward::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) {
        n += l.weight.data().size() + l.bias.size() + l.ln_gain.size() + l.ln_bias.size();
    }
    return n;
}

void FeedForward::get_params(std::span<double> out) const {
    if (out.size() != param_count()) throw std::invalid_argument("get_params: size mismatch");
    std::size_t p = 0;
    for (const Layer& l : layers_) {
        for (double w : l.weight.data()) out[p++] = w;
        for (double b : l.bias) out[p++] = b;
        for (double g : l.ln_gain) out[p++] = g;
        for (double b : l.ln_bias) out[p++] = b;
    }
}

void FeedForward::set_params(std::span<const double> in) {
    if (in.size() != param_count()) throw std::invalid_argument("set_params: size mismatch");
    std::size_t p = 0;
    for (Layer& l : layers_) {
        for (double& w : l.weight.data()) w = in[p++];
        for (double& b : l.bias) b = in[p++];
        for (double& g : l.ln_gain) g = in[p++];
        for (double& b : l.ln_bias) b = in[p++];
    }
}

Vector FeedForward::forward(std::span<const double> input,
                            std::span<const std::span<const double>> aux,
                            std::span<const double> input_mask,
                            RunMode mode,
                            Cache* cache) const {
    if (input.size() != input_dim()) {
        throw std::invalid_argument("forward: input dim " + std::to_string(input.size()) +
                                    " != " + std::to_string(input_dim()));
    }
    if (!aux.empty() && aux.size() != layers_.size()) {
        throw std::invalid_argument("forward: aux must have one entry per layer");
    }
    if (!input_mask.empty() && input_mask.size() != input.size()) {
        throw std::invalid_argument("forward: input mask dim mismatch");
    }

    Cache local;
    Cache& c = cache ? *cache : local;
    c.layers.resize(layers_.size());
    const bool masked = mode == RunMode::train && !input_mask.empty();
    if (masked) {
        c.input_mask.assign(input_mask.begin(), input_mask.end());
    } else {
        c.input_mask.clear();
    }

    std::span<const double> cur = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const LayerSpec& spec = layer.spec;
        Cache::PerLayer& cl = c.layers[l];

        std::span<const double> layer_aux = aux.empty() ? std::span<const double>{} : aux[l];
        if (layer_aux.size() != spec.aux_dim) {
            throw std::invalid_argument("forward: layer " + std::to_string(l) + " expects aux dim " +
                                        std::to_string(spec.aux_dim) + ", got " +
                                        std::to_string(layer_aux.size()));
        }
        if (cur.size() != spec.in_dim) {
            throw std::invalid_argument("forward: layer " + std::to_string(l) + " input dim mismatch");
        }

        cl.input.resize(spec.in_dim + spec.aux_dim);
        for (std::size_t j = 0; j < spec.in_dim; ++j) {
            cl.input[j] = (l == 0 && masked) ? cur[j] * input_mask[j] : cur[j];
        }
        for (std::size_t j = 0; j < spec.aux_dim; ++j) {
            cl.input[spec.in_dim + j] = layer_aux[j];
        }

        cl.output.resize(spec.out_dim);
        const double* in_ptr = cl.input.data();
        const std::size_t fan_in = cl.input.size();
        for (std::size_t o = 0; o < spec.out_dim; ++o) {
            const double* w = layer.weight.row(o).data();
            double h = layer.bias[o];
            for (std::size_t j = 0; j < fan_in; ++j) h += w[j] * in_ptr[j];
            cl.output[o] = h;  // pre-normalization for now
        }

        if (spec.layer_norm) {
            const std::size_t n = spec.out_dim;
            double mean = 0.0;
            for (double h : cl.output) mean += h;
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (double h : cl.output) var += (h - mean) * (h - mean);
            var /= static_cast<double>(n);
            cl.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
            cl.normalized.resize(n);
            for (std::size_t o = 0; o < n; ++o) {
                cl.normalized[o] = (cl.output[o] - mean) * cl.inv_std;
                cl.output[o] = layer.ln_gain[o] * cl.normalized[o] + layer.ln_bias[o];
            }
        } else {
            cl.normalized.clear();
            cl.inv_std = 0.0;
        }

        for (std::size_t o = 0; o < spec.out_dim; ++o) {
            cl.output[o] = activate(spec.activation, cl.output[o]);
        }
        cur = cl.output;
    }
    return Vector(cur.begin(), cur.end());
}

Vector FeedForward::forward(std::span<const double> input) const {
    return forward(input, {}, {}, RunMode::eval, nullptr);
}

void FeedForward::backward(Cache& cache,
                           std::span<const double> output_grad,
                           std::span<double> param_grads,
                           Vector* input_grad) const {
    if (cache.layers.size() != layers_.size()) {
        throw std::invalid_argument("backward: cache does not match network");
    }
    if (output_grad.size() != output_dim()) {
        throw std::invalid_argument("backward: output_grad dim mismatch");
    }
    if (param_grads.size() != param_count()) {
        throw std::invalid_argument("backward: param_grads size mismatch");
    }

    // Offsets of each layer's parameter block in the flat layout.
    std::vector<std::size_t> offsets(layers_.size());
    {
        std::size_t p = 0;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            offsets[l] = p;
            const Layer& layer = layers_[l];
            p += layer.weight.data().size() + layer.bias.size() + layer.ln_gain.size() +
                 layer.ln_bias.size();
        }
    }

    Vector& d_act = cache.d_act;
    Vector& d_linear = cache.d_linear;
    Vector& d_input = cache.d_input;
    Vector& carry = cache.d_carry;
    carry.assign(output_grad.begin(), output_grad.end());

    for (std::size_t li = layers_.size(); li-- > 0;) {
        const Layer& layer = layers_[li];
        const LayerSpec& spec = layer.spec;
        const Cache::PerLayer& cl = cache.layers[li];
        const std::size_t n = spec.out_dim;
        const std::size_t fan_in = spec.in_dim + spec.aux_dim;

        d_act.resize(n);
        for (std::size_t o = 0; o < n; ++o) {
            d_act[o] = carry[o] * activate_grad_from_output(spec.activation, cl.output[o]);
        }

        std::size_t p = offsets[li];
        double* dW = param_grads.data() + p;
        double* db = dW + n * fan_in;
        double* dgain = db + n;
        double* dlnbias = dgain + layer.ln_gain.size();

        d_linear.resize(n);
        if (spec.layer_norm) {
            // d x-hat, then the exact normalization backward:
            // dh_j = inv_std * (dxhat_j - mean(dxhat) - xhat_j * mean(dxhat * xhat))
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t o = 0; o < n; ++o) {
                const double dxhat = d_act[o] * layer.ln_gain[o];
                d_linear[o] = dxhat;  // temporarily holds dxhat
                m1 += dxhat;
                m2 += dxhat * cl.normalized[o];
                dgain[o] += d_act[o] * cl.normalized[o];
                dlnbias[o] += d_act[o];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            for (std::size_t o = 0; o < n; ++o) {
                d_linear[o] = cl.inv_std * (d_linear[o] - m1 - cl.normalized[o] * m2);
            }
        } else {
            d_linear = d_act;
        }

        const double* in_ptr = cl.input.data();
        for (std::size_t o = 0; o < n; ++o) {
            const double g = d_linear[o];
            db[o] += g;
            double* dw_row = dW + o * fan_in;
            for (std::size_t j = 0; j < fan_in; ++j) dw_row[j] += g * in_ptr[j];
        }

        d_input.assign(fan_in, 0.0);
        for (std::size_t o = 0; o < n; ++o) {
            const double g = d_linear[o];
            const double* w = layer.weight.row(o).data();
            for (std::size_t j = 0; j < fan_in; ++j) d_input[j] += g * w[j];
        }
        carry.assign(d_input.begin(), d_input.begin() + static_cast<std::ptrdiff_t>(spec.in_dim));
    }

    if (input_grad) {
        *input_grad = carry;
        if (!cache.input_mask.empty()) {
            for (std::size_t j = 0; j < input_grad->size(); ++j) {
                (*input_grad)[j] *= cache.input_mask[j];
            }
        }
    }
}

}  // namespace gendx
