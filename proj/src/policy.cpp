#include "fan/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fan/errors.hpp"

namespace fan {

namespace {

void softmax_row_log(std::span<const double> logits, std::span<double> log_probs) {
    double m = logits[0];
    for (double v : logits) {
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        sum += std::exp(logits[j] - m);
    }
    const double lse = m + std::log(sum);
    for (std::size_t j = 0; j < logits.size(); ++j) {
        log_probs[j] = logits[j] - lse;
    }
}

void write_param(std::FILE* f, double v) {
    std::fprintf(f, "%.17g\n", v);
}

}  // namespace

ActionDistribution ActionDistribution::from_logits(int dims, int bins, std::vector<double> logits) {
    if (static_cast<int>(logits.size()) != dims * bins) {
        throw ShapeError("distribution: logits size does not match dims*bins");
    }
    ActionDistribution dist;
    dist.dims = dims;
    dist.bins = bins;
    dist.logits = std::move(logits);
    dist.log_probs.resize(dist.logits.size());
    dist.probs.resize(dist.logits.size());
    for (int d = 0; d < dims; ++d) {
        const std::size_t off = static_cast<std::size_t>(d) * static_cast<std::size_t>(bins);
        softmax_row_log({dist.logits.data() + off, static_cast<std::size_t>(bins)},
                        {dist.log_probs.data() + off, static_cast<std::size_t>(bins)});
    }
    for (std::size_t i = 0; i < dist.log_probs.size(); ++i) {
        dist.probs[i] = std::exp(dist.log_probs[i]);
    }
    return dist;
}

std::span<const double> ActionDistribution::probs_row(int d) const {
    return {probs.data() + static_cast<std::size_t>(d) * static_cast<std::size_t>(bins),
            static_cast<std::size_t>(bins)};
}

std::span<const double> ActionDistribution::log_probs_row(int d) const {
    return {log_probs.data() + static_cast<std::size_t>(d) * static_cast<std::size_t>(bins),
            static_cast<std::size_t>(bins)};
}

double ActionDistribution::log_prob(std::span<const int> action) const {
    if (static_cast<int>(action.size()) != dims) {
        throw ShapeError("distribution: action arity mismatch");
    }
    double total = 0.0;
    for (int d = 0; d < dims; ++d) {
        const int j = action[static_cast<std::size_t>(d)];
        if (j < 0 || j >= bins) {
            throw IndexError("distribution: bin index out of range");
        }
        total += log_probs[static_cast<std::size_t>(d * bins + j)];
    }
    return total;
}

double ActionDistribution::entropy() const {
    double h = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        h -= probs[i] * log_probs[i];
    }
    return h;
}

std::vector<int> ActionDistribution::argmax() const {
    std::vector<int> out(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d) {
        const auto row = probs_row(d);
        int best = 0;
        for (int j = 1; j < bins; ++j) {
            if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) {
                best = j;
            }
        }
        out[static_cast<std::size_t>(d)] = best;
    }
    return out;
}

std::vector<int> ActionDistribution::sample(Rng& rng) const {
    std::vector<int> out(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d) {
        out[static_cast<std::size_t>(d)] = rng.categorical(probs_row(d));
    }
    return out;
}

FeedForwardNet::FeedForwardNet(int obs_dim, int instruction_count, int embed_dim,
                               std::vector<int> hidden, int output_dim, std::uint64_t init_seed)
    : obs_dim_(obs_dim),
      instruction_count_(instruction_count),
      embed_dim_(embed_dim),
      hidden_(std::move(hidden)),
      output_dim_(output_dim),
      init_seed_(init_seed) {
    if (obs_dim_ < 1 || instruction_count_ < 1 || embed_dim_ < 1 || output_dim_ < 1) {
        throw ConfigError("net: all sizes must be positive");
    }
    for (int h : hidden_) {
        if (h < 1) {
            throw ConfigError("net: hidden layer sizes must be positive");
        }
    }
    build_layout();
    init_params(init_seed);
}

void FeedForwardNet::build_layout() {
    layer_in_.clear();
    layer_out_.clear();
    weight_offset_.clear();
    bias_offset_.clear();

    int in = obs_dim_ + embed_dim_;
    for (int h : hidden_) {
        layer_in_.push_back(in);
        layer_out_.push_back(h);
        in = h;
    }
    layer_in_.push_back(in);
    layer_out_.push_back(output_dim_);

    embed_offset_ = 0;
    std::size_t cursor = static_cast<std::size_t>(instruction_count_) * static_cast<std::size_t>(embed_dim_);
    for (std::size_t l = 0; l < layer_in_.size(); ++l) {
        weight_offset_.push_back(cursor);
        cursor += static_cast<std::size_t>(layer_in_[l]) * static_cast<std::size_t>(layer_out_[l]);
        bias_offset_.push_back(cursor);
        cursor += static_cast<std::size_t>(layer_out_[l]);
    }
    params_.assign(cursor, 0.0);
}

void FeedForwardNet::init_params(std::uint64_t seed) {
    Rng rng(seed);
    const double embed_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim_));
    for (std::size_t i = 0; i < static_cast<std::size_t>(instruction_count_) * static_cast<std::size_t>(embed_dim_); ++i) {
        params_[embed_offset_ + i] = rng.uniform(-embed_scale, embed_scale);
    }
    for (std::size_t l = 0; l < layer_in_.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer_in_[l]));
        const std::size_t n = static_cast<std::size_t>(layer_in_[l]) * static_cast<std::size_t>(layer_out_[l]);
        for (std::size_t i = 0; i < n; ++i) {
            params_[weight_offset_[l] + i] = rng.uniform(-scale, scale);
        }
        // biases stay zero
    }
}

void FeedForwardNet::forward(std::span<const double> obs, int instruction, std::span<double> out) const {
    if (static_cast<int>(obs.size()) != obs_dim_) {
        throw ShapeError("net: observation length mismatch");
    }
    if (instruction < 0 || instruction >= instruction_count_) {
        throw LookupError("net: unknown instruction id " + std::to_string(instruction));
    }
    if (static_cast<int>(out.size()) != output_dim_) {
        throw ShapeError("net: output span size mismatch");
    }

    std::vector<double> x(static_cast<std::size_t>(obs_dim_ + embed_dim_));
    std::copy(obs.begin(), obs.end(), x.begin());
    const std::size_t erow = embed_offset_ + static_cast<std::size_t>(instruction) * static_cast<std::size_t>(embed_dim_);
    for (int i = 0; i < embed_dim_; ++i) {
        x[static_cast<std::size_t>(obs_dim_ + i)] = params_[erow + static_cast<std::size_t>(i)];
    }

    std::vector<double> next;
    const std::size_t layers = layer_in_.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const int nin = layer_in_[l];
        const int nout = layer_out_[l];
        next.assign(static_cast<std::size_t>(nout), 0.0);
        const double* w = params_.data() + weight_offset_[l];
        const double* b = params_.data() + bias_offset_[l];
        for (int r = 0; r < nout; ++r) {
            double acc = b[r];
            const double* wrow = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(nin);
            for (int c = 0; c < nin; ++c) {
                acc += wrow[c] * x[static_cast<std::size_t>(c)];
            }
            next[static_cast<std::size_t>(r)] = acc;
        }
        if (l + 1 < layers) {
            for (double& v : next) {
                v = std::tanh(v);
            }
        }
        x.swap(next);
    }
    std::copy(x.begin(), x.end(), out.begin());
}

void FeedForwardNet::backward(std::span<const double> obs, int instruction,
                              std::span<const double> upstream, std::span<double> grad) const {
    if (static_cast<int>(upstream.size()) != output_dim_) {
        throw ShapeError("net: upstream gradient size mismatch");
    }
    if (grad.size() != params_.size()) {
        throw ShapeError("net: gradient buffer size mismatch");
    }
    if (static_cast<int>(obs.size()) != obs_dim_) {
        throw ShapeError("net: observation length mismatch");
    }
    if (instruction < 0 || instruction >= instruction_count_) {
        throw LookupError("net: unknown instruction id " + std::to_string(instruction));
    }

    const std::size_t layers = layer_in_.size();

    // Forward pass keeping post-activation values per layer.
    std::vector<std::vector<double>> acts(layers + 1);
    acts[0].resize(static_cast<std::size_t>(obs_dim_ + embed_dim_));
    std::copy(obs.begin(), obs.end(), acts[0].begin());
    const std::size_t erow = embed_offset_ + static_cast<std::size_t>(instruction) * static_cast<std::size_t>(embed_dim_);
    for (int i = 0; i < embed_dim_; ++i) {
        acts[0][static_cast<std::size_t>(obs_dim_ + i)] = params_[erow + static_cast<std::size_t>(i)];
    }
    for (std::size_t l = 0; l < layers; ++l) {
        const int nin = layer_in_[l];
        const int nout = layer_out_[l];
        acts[l + 1].assign(static_cast<std::size_t>(nout), 0.0);
        const double* w = params_.data() + weight_offset_[l];
        const double* b = params_.data() + bias_offset_[l];
        for (int r = 0; r < nout; ++r) {
            double acc = b[r];
            const double* wrow = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(nin);
            for (int c = 0; c < nin; ++c) {
                acc += wrow[c] * acts[l][static_cast<std::size_t>(c)];
            }
            acts[l + 1][static_cast<std::size_t>(r)] = (l + 1 < layers) ? std::tanh(acc) : acc;
        }
    }

    // Reverse pass.
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t li = layers; li-- > 0;) {
        const int nin = layer_in_[li];
        const int nout = layer_out_[li];
        const double* w = params_.data() + weight_offset_[li];
        double* gw = grad.data() + weight_offset_[li];
        double* gb = grad.data() + bias_offset_[li];
        const std::vector<double>& x_prev = acts[li];

        std::vector<double> delta_prev(static_cast<std::size_t>(nin), 0.0);
        for (int r = 0; r < nout; ++r) {
            const double dr = delta[static_cast<std::size_t>(r)];
            gb[r] += dr;
            double* gwrow = gw + static_cast<std::size_t>(r) * static_cast<std::size_t>(nin);
            const double* wrow = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(nin);
            for (int c = 0; c < nin; ++c) {
                gwrow[c] += dr * x_prev[static_cast<std::size_t>(c)];
                delta_prev[static_cast<std::size_t>(c)] += dr * wrow[c];
            }
        }
        if (li > 0) {
            // tanh' through the previous layer's activation
            for (int c = 0; c < nin; ++c) {
                const double a = x_prev[static_cast<std::size_t>(c)];
                delta_prev[static_cast<std::size_t>(c)] *= (1.0 - a * a);
            }
        }
        delta.swap(delta_prev);
    }

    // delta now holds the gradient on the input vector; the embedding slice
    // accumulates into the instruction's row.
    double* ge = grad.data() + erow;
    for (int i = 0; i < embed_dim_; ++i) {
        ge[i] += delta[static_cast<std::size_t>(obs_dim_ + i)];
    }
}

PolicyModel::PolicyModel(int obs_dim, int instruction_count, int embed_dim,
                         std::vector<int> hidden, int dims, int bins, std::uint64_t init_seed)
    : net_(obs_dim, instruction_count, embed_dim, std::move(hidden), dims * bins, init_seed),
      dims_(dims),
      bins_(bins) {
    if (dims < 1 || bins < 2) {
        throw ConfigError("policy: dims must be >= 1 and bins >= 2");
    }
}

ActionDistribution PolicyModel::forward(std::span<const double> obs, int instruction) const {
    std::vector<double> logits(static_cast<std::size_t>(dims_ * bins_));
    net_.forward(obs, instruction, logits);
    return ActionDistribution::from_logits(dims_, bins_, std::move(logits));
}

void PolicyModel::backward(std::span<const double> obs, int instruction,
                           std::span<const double> upstream, std::span<double> grad) const {
    if (static_cast<int>(upstream.size()) != dims_ * bins_) {
        throw ShapeError("policy: upstream gradient must be dims*bins");
    }
    net_.backward(obs, instruction, upstream, grad);
}

ValueModel::ValueModel(int obs_dim, int instruction_count, int embed_dim,
                       std::vector<int> hidden, std::uint64_t init_seed)
    : net_(obs_dim, instruction_count, embed_dim, std::move(hidden), 1, init_seed) {}

double ValueModel::forward(std::span<const double> obs, int instruction) const {
    double out = 0.0;
    net_.forward(obs, instruction, {&out, 1});
    return out;
}

void ValueModel::backward(std::span<const double> obs, int instruction,
                          double upstream, std::span<double> grad) const {
    net_.backward(obs, instruction, {&upstream, 1}, grad);
}

namespace {

void save_net(std::FILE* f, const char* kind, const FeedForwardNet& net, int dims, int bins) {
    std::fprintf(f, "fanshape-checkpoint v1\n");
    std::fprintf(f, "kind %s\n", kind);
    std::fprintf(f, "obs_dim %d\n", net.obs_dim());
    std::fprintf(f, "instructions %d\n", net.instruction_count());
    std::fprintf(f, "embed_dim %d\n", net.embed_dim());
    std::fprintf(f, "hidden");
    for (int h : net.hidden()) {
        std::fprintf(f, " %d", h);
    }
    std::fprintf(f, "\n");
    std::fprintf(f, "dims %d\n", dims);
    std::fprintf(f, "bins %d\n", bins);
    std::fprintf(f, "seed %llu\n", static_cast<unsigned long long>(net.init_seed()));
    std::fprintf(f, "params %zu\n", net.param_count());
    for (double v : net.params()) {
        write_param(f, v);
    }
}

struct NetHeader {
    std::string kind;
    int obs_dim = 0;
    int instructions = 0;
    int embed_dim = 0;
    std::vector<int> hidden;
    int dims = 0;
    int bins = 0;
    std::uint64_t seed = 0;
    std::size_t params = 0;
};

NetHeader read_header(std::istream& in, const std::string& path) {
    NetHeader h;
    std::string line;
    if (!std::getline(in, line) || line != "fanshape-checkpoint v1") {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    auto expect_key = [&](const char* key) -> std::istringstream {
        if (!std::getline(in, line)) {
            throw ParseError("checkpoint: truncated header in " + path);
        }
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) {
            throw ParseError("checkpoint: expected '" + std::string(key) + "' in " + path);
        }
        return ls;
    };
    { auto ls = expect_key("kind"); ls >> h.kind; }
    { auto ls = expect_key("obs_dim"); ls >> h.obs_dim; }
    { auto ls = expect_key("instructions"); ls >> h.instructions; }
    { auto ls = expect_key("embed_dim"); ls >> h.embed_dim; }
    {
        auto ls = expect_key("hidden");
        int v;
        while (ls >> v) {
            h.hidden.push_back(v);
        }
    }
    { auto ls = expect_key("dims"); ls >> h.dims; }
    { auto ls = expect_key("bins"); ls >> h.bins; }
    { auto ls = expect_key("seed"); unsigned long long s; ls >> s; h.seed = s; }
    { auto ls = expect_key("params"); ls >> h.params; }
    return h;
}

void read_params(std::istream& in, const std::string& path, std::vector<double>& params, std::size_t n) {
    params.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> params[i])) {
            throw ParseError("checkpoint: truncated parameters in " + path);
        }
    }
}

}  // namespace

void PolicyModel::save(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw IoError("checkpoint: cannot open " + path + " for writing");
    }
    save_net(f, "policy", net_, dims_, bins_);
    std::fclose(f);
}

PolicyModel PolicyModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("checkpoint: cannot open " + path);
    }
    NetHeader h = read_header(in, path);
    if (h.kind != "policy") {
        throw ParseError("checkpoint: expected kind 'policy' in " + path);
    }
    PolicyModel model(h.obs_dim, h.instructions, h.embed_dim, h.hidden, h.dims, h.bins, h.seed);
    if (model.param_count() != h.params) {
        throw ParseError("checkpoint: parameter count mismatch in " + path);
    }
    read_params(in, path, model.params(), h.params);
    return model;
}

void ValueModel::save(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw IoError("checkpoint: cannot open " + path + " for writing");
    }
    save_net(f, "value", net_, 0, 0);
    std::fclose(f);
}

ValueModel ValueModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("checkpoint: cannot open " + path);
    }
    NetHeader h = read_header(in, path);
    if (h.kind != "value") {
        throw ParseError("checkpoint: expected kind 'value' in " + path);
    }
    ValueModel model(h.obs_dim, h.instructions, h.embed_dim, h.hidden, h.seed);
    if (model.param_count() != h.params) {
        throw ParseError("checkpoint: parameter count mismatch in " + path);
    }
    read_params(in, path, model.params(), h.params);
    return model;
}

GradCheckResult finite_diff_check(std::span<double> params,
                                  const std::function<double()>& loss,
                                  std::span<const double> analytic_grad,
                                  int min_coords, double step, Rng& rng) {
    if (analytic_grad.size() != params.size()) {
        throw ShapeError("gradcheck: analytic gradient size mismatch");
    }
    const std::size_t n = params.size();
    std::vector<std::size_t> coords;
    if (n <= static_cast<std::size_t>(min_coords)) {
        coords.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            coords[i] = i;
        }
    } else {
        std::unordered_set<std::size_t> seen;
        while (coords.size() < static_cast<std::size_t>(min_coords)) {
            const std::size_t i = rng.next_u64() % n;
            if (seen.insert(i).second) {
                coords.push_back(i);
            }
        }
    }

    GradCheckResult result;
    result.coords_checked = static_cast<int>(coords.size());
    for (std::size_t i : coords) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss();
        params[i] = saved - step;
        const double down = loss();
        params[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("gradcheck: loss is not finite near the test point");
        }
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::abs(analytic_grad[i] - fd) / std::max(1.0, std::abs(fd));
        result.max_rel_err = std::max(result.max_rel_err, rel);
    }
    return result;
}

}  // namespace fan
