#include "sdm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sdm {

using json = nlohmann::json;

void MlpConfig::validate() const {
    if (input_dim < 1) throw ValidationError("model input_dim must be >= 1");
    if (hidden_layers < 1) throw ValidationError("model hidden_layers must be >= 1");
    if (hidden_width < 1) throw ValidationError("model hidden_width must be >= 1");
    if (output_dim < 1) throw ValidationError("model output_dim must be >= 1");
    if (!(batchnorm_eps > 0.0)) throw ValidationError("batchnorm_eps must be > 0");
    if (batchnorm_momentum < 0.0 || batchnorm_momentum > 1.0) {
        throw ValidationError("batchnorm_momentum must be in [0, 1]");
    }
}

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// out = in * W + b, rows independent
void linear_forward(const Matrix& in, const LinearParams& layer, Matrix& out) {
    for (int i = 0; i < out.rows; ++i) {
        std::copy(layer.bias.begin(), layer.bias.end(), out.row(i));
    }
    matmul_add(in, layer.weight, out);
}

void check_finite_batch(const Matrix& batch) {
    for (double v : batch.data) {
        if (!std::isfinite(v)) throw ValidationError("batch contains a non-finite value");
    }
}

} // namespace

std::vector<BlockRef> learnable_blocks(Parameters& params) {
    std::vector<BlockRef> blocks;
    auto add = [&blocks](const std::string& name, std::vector<double>& v) {
        blocks.push_back({name, v.data(), v.size()});
    };
    add("input.weight", params.input_proj.weight.data);
    add("input.bias", params.input_proj.bias);
    for (size_t l = 0; l < params.hidden.size(); ++l) {
        const std::string p = "hidden" + std::to_string(l + 1) + ".";
        add(p + "weight", params.hidden[l].weight.data);
        add(p + "bias", params.hidden[l].bias);
        add(p + "bn_gamma", params.norms[l].gamma);
        add(p + "bn_beta", params.norms[l].beta);
    }
    add("head.weight", params.head.weight.data);
    add("head.bias", params.head.bias);
    return blocks;
}

std::vector<BlockRef> learnable_blocks(Gradients& grads) {
    std::vector<BlockRef> blocks;
    auto add = [&blocks](const std::string& name, std::vector<double>& v) {
        blocks.push_back({name, v.data(), v.size()});
    };
    add("input.weight", grads.input_proj.weight.data);
    add("input.bias", grads.input_proj.bias);
    for (size_t l = 0; l < grads.hidden.size(); ++l) {
        const std::string p = "hidden" + std::to_string(l + 1) + ".";
        add(p + "weight", grads.hidden[l].weight.data);
        add(p + "bias", grads.hidden[l].bias);
        add(p + "bn_gamma", grads.norms[l].gamma);
        add(p + "bn_beta", grads.norms[l].beta);
    }
    add("head.weight", grads.head.weight.data);
    add("head.bias", grads.head.bias);
    return blocks;
}

std::vector<BlockRef> state_blocks(Parameters& params) {
    std::vector<BlockRef> blocks;
    auto add = [&blocks](const std::string& name, std::vector<double>& v) {
        blocks.push_back({name, v.data(), v.size()});
    };
    add("input.weight", params.input_proj.weight.data);
    add("input.bias", params.input_proj.bias);
    for (size_t l = 0; l < params.hidden.size(); ++l) {
        const std::string p = "hidden" + std::to_string(l + 1) + ".";
        add(p + "weight", params.hidden[l].weight.data);
        add(p + "bias", params.hidden[l].bias);
        add(p + "bn_gamma", params.norms[l].gamma);
        add(p + "bn_beta", params.norms[l].beta);
        add(p + "bn_running_mean", params.norms[l].running_mean);
        add(p + "bn_running_var", params.norms[l].running_var);
    }
    add("head.weight", params.head.weight.data);
    add("head.bias", params.head.bias);
    return blocks;
}

Parameters init_params(const MlpConfig& config, Rng& rng) {
    config.validate();
    Parameters params;
    params.config = config;
    const int d = config.input_dim, h = config.hidden_width, s = config.output_dim;

    auto init_linear = [&rng](LinearParams& layer, int fan_in, int fan_out) {
        layer.weight = Matrix(fan_in, fan_out);
        const double std = std::sqrt(2.0 / fan_in);
        for (double& w : layer.weight.data) w = rng.normal(0.0, std);
        layer.bias.assign(fan_out, 0.0);
    };

    init_linear(params.input_proj, d, h);
    params.hidden.resize(config.hidden_layers);
    params.norms.resize(config.hidden_layers);
    for (int l = 0; l < config.hidden_layers; ++l) {
        init_linear(params.hidden[l], h, h);
        params.norms[l].gamma.assign(h, 1.0);
        params.norms[l].beta.assign(h, 0.0);
        params.norms[l].running_mean.assign(h, 0.0);
        params.norms[l].running_var.assign(h, 1.0);
    }
    init_linear(params.head, h, s);
    return params;
}

Matrix forward(Parameters& params, const Matrix& batch, RunMode mode, ForwardCache* cache) {
    const MlpConfig& cfg = params.config;
    const int b = batch.rows;
    if (batch.cols != cfg.input_dim) {
        throw ValidationError("batch feature dim " + std::to_string(batch.cols) +
                              " does not match model input_dim " + std::to_string(cfg.input_dim));
    }
    const bool train = mode == RunMode::train;
    if (train && b < 2) {
        throw ValidationError("train-mode forward needs a batch of >= 2 rows");
    }
    if (b < 1) throw ValidationError("forward needs a non-empty batch");
    check_finite_batch(batch);

    const int h = cfg.hidden_width;
    if (cache) {
        cache->train_mode = train;
        cache->input = batch;
        cache->layer_inputs.assign(cfg.hidden_layers + 1, Matrix());
        cache->bn.assign(cfg.hidden_layers, BatchNormCache());
    }

    Matrix hcur(b, h);
    linear_forward(batch, params.input_proj, hcur);

    Matrix pre(b, h);
    std::vector<double> mean(h), var(h), inv_std(h);
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        if (cache) cache->layer_inputs[l] = hcur;
        linear_forward(hcur, params.hidden[l], pre);

        BatchNormParams& bn = params.norms[l];
        BatchNormCache* bc = cache ? &cache->bn[l] : nullptr;
        if (bc) {
            bc->xhat = Matrix(b, h);
            bc->normed = Matrix(b, h);
        }

        if (train) {
            std::fill(mean.begin(), mean.end(), 0.0);
            std::fill(var.begin(), var.end(), 0.0);
            for (int i = 0; i < b; ++i) {
                const double* row = pre.row(i);
                for (int j = 0; j < h; ++j) mean[j] += row[j];
            }
            for (int j = 0; j < h; ++j) mean[j] /= b;
            for (int i = 0; i < b; ++i) {
                const double* row = pre.row(i);
                for (int j = 0; j < h; ++j) {
                    const double d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            const double m = cfg.batchnorm_momentum;
            for (int j = 0; j < h; ++j) {
                var[j] /= b;
                bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * mean[j];
                // unbiased variance feeds the running estimate
                bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * var[j] * b / (b - 1);
            }
        } else {
            mean = bn.running_mean;
            var = bn.running_var;
        }
        for (int j = 0; j < h; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + cfg.batchnorm_eps);
        if (bc) bc->inv_std = inv_std;

        for (int i = 0; i < b; ++i) {
            const double* prow = pre.row(i);
            double* hrow = hcur.row(i);
            double* xrow = bc ? bc->xhat.row(i) : nullptr;
            double* nrow = bc ? bc->normed.row(i) : nullptr;
            for (int j = 0; j < h; ++j) {
                const double xhat = (prow[j] - mean[j]) * inv_std[j];
                const double normed = bn.gamma[j] * xhat + bn.beta[j];
                if (bc) {
                    xrow[j] = xhat;
                    nrow[j] = normed;
                }
                hrow[j] += normed > 0.0 ? normed : 0.0; // residual add of relu
            }
        }
    }
    if (cache) cache->layer_inputs[cfg.hidden_layers] = hcur;

    Matrix yhat(b, cfg.output_dim);
    linear_forward(hcur, params.head, yhat);
    for (double& v : yhat.data) {
        const double p = stable_sigmoid(v);
        v = std::min(1.0 - kSigmoidClamp, std::max(kSigmoidClamp, p));
    }
    if (cache) cache->yhat = yhat;
    return yhat;
}

Gradients backward(const Parameters& params, const ForwardCache& cache,
                   const Matrix& grad_predictions) {
    const MlpConfig& cfg = params.config;
    if (!cache.train_mode) {
        throw ValidationError("backward requires a cache from a train-mode forward");
    }
    const int b = cache.input.rows;
    if (grad_predictions.rows != b || grad_predictions.cols != cfg.output_dim) {
        throw ValidationError("grad_predictions shape does not match the cached batch");
    }
    const int h = cfg.hidden_width;

    Gradients grads;
    grads.input_proj.weight = Matrix(cfg.input_dim, h);
    grads.input_proj.bias.assign(h, 0.0);
    grads.hidden.resize(cfg.hidden_layers);
    grads.norms.resize(cfg.hidden_layers);
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        grads.hidden[l].weight = Matrix(h, h);
        grads.hidden[l].bias.assign(h, 0.0);
        grads.norms[l].gamma.assign(h, 0.0);
        grads.norms[l].beta.assign(h, 0.0);
    }
    grads.head.weight = Matrix(h, cfg.output_dim);
    grads.head.bias.assign(cfg.output_dim, 0.0);

    // through the clamped sigmoid: dz = dyhat * yhat * (1 - yhat)
    Matrix dlogits(b, cfg.output_dim);
    for (size_t i = 0; i < dlogits.data.size(); ++i) {
        const double y = cache.yhat.data[i];
        dlogits.data[i] = grad_predictions.data[i] * y * (1.0 - y);
    }

    matmul_transposed_a(cache.layer_inputs[cfg.hidden_layers], dlogits, grads.head.weight);
    for (int i = 0; i < b; ++i) {
        const double* row = dlogits.row(i);
        for (int j = 0; j < cfg.output_dim; ++j) grads.head.bias[j] += row[j];
    }
    Matrix dh(b, h);
    matmul_transposed_b(dlogits, params.head.weight, dh);

    Matrix dnormed(b, h), dpre(b, h), dskip(b, h);
    std::vector<double> sum_xhat(h), k_dnormed(h), k_xhat(h), k_const(h);
    for (int l = cfg.hidden_layers - 1; l >= 0; --l) {
        const BatchNormCache& bc = cache.bn[l];
        const BatchNormParams& bn = params.norms[l];

        // relu gate on the residual branch
        for (size_t i = 0; i < dnormed.data.size(); ++i) {
            dnormed.data[i] = bc.normed.data[i] > 0.0 ? dh.data[i] : 0.0;
        }

        auto& dgamma = grads.norms[l].gamma;
        auto& dbeta = grads.norms[l].beta;
        std::fill(sum_xhat.begin(), sum_xhat.end(), 0.0);
        for (int i = 0; i < b; ++i) {
            const double* drow = dnormed.row(i);
            const double* xrow = bc.xhat.row(i);
            for (int j = 0; j < h; ++j) {
                dgamma[j] += drow[j] * xrow[j];
                dbeta[j] += drow[j];
                sum_xhat[j] += xrow[j];
            }
        }

        // batch-norm backward through the batch mean and variance. With
        // dxhat = dnormed * gamma and xc = xhat / inv_std:
        //   sum dxhat       = gamma * dbeta
        //   sum dxhat * xc  = gamma * std * dgamma
        //   sum xc          = std * sum xhat
        for (int j = 0; j < h; ++j) {
            const double gamma = bn.gamma[j];
            const double inv_std = bc.inv_std[j];
            const double std = 1.0 / inv_std;
            const double dvar = gamma * std * dgamma[j] * (-0.5) * inv_std * inv_std * inv_std;
            const double dmean =
                -inv_std * gamma * dbeta[j] + dvar * (-2.0 / b) * std * sum_xhat[j];
            // dpre(i,j) = dnormed * gamma * inv_std + xhat * 2 dvar std / b + dmean / b
            k_dnormed[j] = gamma * inv_std;
            k_xhat[j] = 2.0 * dvar * std / b;
            k_const[j] = dmean / b;
        }
        for (int i = 0; i < b; ++i) {
            const double* drow = dnormed.row(i);
            const double* xrow = bc.xhat.row(i);
            double* prow = dpre.row(i);
            for (int j = 0; j < h; ++j) {
                prow[j] = drow[j] * k_dnormed[j] + xrow[j] * k_xhat[j] + k_const[j];
            }
        }

        matmul_transposed_a(cache.layer_inputs[l], dpre, grads.hidden[l].weight);
        for (int i = 0; i < b; ++i) {
            const double* row = dpre.row(i);
            for (int j = 0; j < h; ++j) grads.hidden[l].bias[j] += row[j];
        }
        // residual: gradient reaches the block input both directly and
        // through the linear branch
        matmul_transposed_b(dpre, params.hidden[l].weight, dskip);
        for (size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dskip.data[i];
    }

    matmul_transposed_a(cache.input, dh, grads.input_proj.weight);
    for (int i = 0; i < b; ++i) {
        const double* row = dh.row(i);
        for (int j = 0; j < h; ++j) grads.input_proj.bias[j] += row[j];
    }
    return grads;
}

void add_gradients(Gradients& into, const Gradients& other) {
    auto a = learnable_blocks(into);
    auto o = learnable_blocks(const_cast<Gradients&>(other));
    if (a.size() != o.size()) throw ValidationError("gradient shapes do not match");
    for (size_t k = 0; k < a.size(); ++k) {
        if (a[k].size != o[k].size) throw ValidationError("gradient shapes do not match");
        for (size_t i = 0; i < a[k].size; ++i) a[k].data[i] += o[k].data[i];
    }
}

void sgd_update(Parameters& params, Gradients& grads, double lr) {
    if (!(lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
    auto pblocks = learnable_blocks(params);
    auto gblocks = learnable_blocks(grads);
    if (pblocks.size() != gblocks.size()) {
        throw ValidationError("gradient block count does not match parameters");
    }
    for (size_t k = 0; k < pblocks.size(); ++k) {
        if (pblocks[k].size != gblocks[k].size) {
            throw ValidationError("gradient shape mismatch in block " + pblocks[k].name);
        }
        for (size_t i = 0; i < gblocks[k].size; ++i) {
            if (!std::isfinite(gblocks[k].data[i])) {
                throw std::runtime_error("non-finite gradient in block " + pblocks[k].name);
            }
        }
    }
    for (size_t k = 0; k < pblocks.size(); ++k) {
        for (size_t i = 0; i < pblocks[k].size; ++i) {
            pblocks[k].data[i] -= lr * gblocks[k].data[i];
        }
    }
}

void save_checkpoint(Parameters& params, const std::string& path) {
    auto blocks = state_blocks(params);
    json header;
    header["format"] = "sdm-checkpoint";
    header["version"] = 1;
    header["config"] = {{"input_dim", params.config.input_dim},
                        {"hidden_layers", params.config.hidden_layers},
                        {"hidden_width", params.config.hidden_width},
                        {"output_dim", params.config.output_dim},
                        {"batchnorm_eps", params.config.batchnorm_eps},
                        {"batchnorm_momentum", params.config.batchnorm_momentum}};
    json blist = json::array();
    for (const auto& blk : blocks) {
        blist.push_back({{"name", blk.name}, {"count", blk.size}});
    }
    header["blocks"] = blist;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open checkpoint for writing: " + path);
    out.write("SDMCKPT1", 8);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& blk : blocks) {
        out.write(reinterpret_cast<const char*>(blk.data),
                  static_cast<std::streamsize>(blk.size * sizeof(double)));
    }
    if (!out) throw ValidationError("failed writing checkpoint: " + path);
}

Parameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SDMCKPT1", 8) != 0) {
        throw ValidationError("not a checkpoint file (bad magic): " + path);
    }
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen == 0 || hlen > (1u << 20)) {
        throw ValidationError("corrupt checkpoint header length: " + path);
    }
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw ValidationError("truncated checkpoint header: " + path);

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw ValidationError("invalid checkpoint header JSON: " + std::string(e.what()));
    }
    if (header.value("format", "") != "sdm-checkpoint" || header.value("version", 0) != 1) {
        throw ValidationError("unsupported checkpoint format/version in " + path);
    }

    MlpConfig cfg;
    const auto& jc = header.at("config");
    cfg.input_dim = jc.at("input_dim").get<int>();
    cfg.hidden_layers = jc.at("hidden_layers").get<int>();
    cfg.hidden_width = jc.at("hidden_width").get<int>();
    cfg.output_dim = jc.at("output_dim").get<int>();
    cfg.batchnorm_eps = jc.at("batchnorm_eps").get<double>();
    cfg.batchnorm_momentum = jc.at("batchnorm_momentum").get<double>();
    cfg.validate();

    Rng dummy(0);
    Parameters params = init_params(cfg, dummy);
    auto blocks = state_blocks(params);
    const auto& blist = header.at("blocks");
    if (blist.size() != blocks.size()) {
        throw ValidationError("checkpoint block list does not match model shape in " + path);
    }
    for (size_t k = 0; k < blocks.size(); ++k) {
        if (blist[k].at("name").get<std::string>() != blocks[k].name ||
            blist[k].at("count").get<uint64_t>() != blocks[k].size) {
            throw ValidationError("checkpoint block " + blocks[k].name +
                                  " has unexpected name/size in " + path);
        }
        in.read(reinterpret_cast<char*>(blocks[k].data),
                static_cast<std::streamsize>(blocks[k].size * sizeof(double)));
        if (!in) throw ValidationError("truncated checkpoint data in block " + blocks[k].name);
    }
    return params;
}

} // namespace sdm
