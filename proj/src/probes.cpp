#include "tspsens/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "tspsens/error.hpp"
#include "tspsens/io.hpp"
#include "tspsens/rng.hpp"

namespace tspsens {

using nlohmann::json;

std::string_view to_string(ProbeFamily f) {
    switch (f) {
        case ProbeFamily::linear: return "linear";
        case ProbeFamily::deepsets: return "deepsets";
        case ProbeFamily::settransformer: return "settransformer";
    }
    return "?";
}

std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::regression: return "regression";
        case Objective::hard_ce: return "hard_ce";
        case Objective::soft_ce: return "soft_ce";
    }
    return "?";
}

std::string_view to_string(Selection s) { return s == Selection::val_loss ? "val_loss" : "val_top1"; }

ProbeFamily parse_family(std::string_view s) {
    if (s == "linear") return ProbeFamily::linear;
    if (s == "deepsets") return ProbeFamily::deepsets;
    if (s == "settransformer" || s == "transformer") return ProbeFamily::settransformer;
    throw ValidationError("unknown probe family '" + std::string(s) + "' (expected linear|deepsets|settransformer)");
}

Objective parse_objective(std::string_view s) {
    if (s == "regression") return Objective::regression;
    if (s == "hard_ce") return Objective::hard_ce;
    if (s == "soft_ce") return Objective::soft_ce;
    throw ValidationError("unknown objective '" + std::string(s) + "' (expected regression|hard_ce|soft_ce)");
}

Selection parse_selection(std::string_view s) {
    if (s == "val_loss") return Selection::val_loss;
    if (s == "val_top1") return Selection::val_top1;
    throw ValidationError("unknown selection criterion '" + std::string(s) + "' (expected val_loss|val_top1)");
}

Selection ProbeConfig::resolved_selection() const {
    if (selection) return *selection;
    return objective == Objective::regression ? Selection::val_loss : Selection::val_top1;
}

void ProbeConfig::validate() const {
    if (!(tau > 0.0)) throw ValidationError("temperature tau must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (family != ProbeFamily::linear && width == 0) throw ValidationError("width must be positive");
    if (family == ProbeFamily::deepsets && depth == 0) throw ValidationError("DeepSets needs at least one phi layer");
    if (family == ProbeFamily::settransformer) {
        if (heads == 0 || width % heads != 0) {
            throw ValidationError("head count " + std::to_string(heads) + " must divide width " + std::to_string(width));
        }
        if (ff_width == 0) throw ValidationError("feedforward width must be positive");
    }
}

ProbeConfig ProbeConfig::reference_defaults(ProbeFamily family, Task task) {
    ProbeConfig c;
    c.family = family;
    c.epochs = 50;
    const bool node = task == Task::removal;
    switch (family) {
        case ProbeFamily::linear:
            c.objective = node ? Objective::regression : Objective::soft_ce;
            c.lr = 1e-2;
            c.weight_decay = 0.0;
            c.dropout = 0.0;
            break;
        case ProbeFamily::deepsets:
            c.objective = node ? Objective::regression : Objective::soft_ce;
            c.width = 256;
            c.depth = node ? 2 : 3;
            c.dropout = 0.1;
            c.lr = 1e-3;
            c.weight_decay = node ? 1e-4 : 1e-3;
            break;
        case ProbeFamily::settransformer:
            c.objective = node ? Objective::regression : Objective::soft_ce;
            c.width = 256;
            c.depth = 4;
            c.heads = 4;
            c.ff_width = 512;
            c.dropout = 0.1;
            c.lr = node ? 3e-4 : 1e-3;
            c.weight_decay = 1e-3;
            break;
    }
    c.tau = 2.0;
    return c;
}

void Parameters::add(std::string name, Matrix m) {
    names.push_back(std::move(name));
    values.push_back(std::move(m));
}

const Matrix& Parameters::get(std::string_view name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return values[k];
    }
    throw ValidationError("probe has no parameter '" + std::string(name) + "'");
}

std::size_t Parameters::count() const {
    std::size_t total = 0;
    for (const auto& v : values) total += v.size();
    return total;
}

namespace {

void add_affine(Parameters& p, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    Matrix b(1, out);
    for (double& v : b.data) v = rng.uniform(-bound, bound);
    p.add(prefix + ".w", std::move(w));
    p.add(prefix + ".b", std::move(b));
}

void add_layer_norm(Parameters& p, const std::string& prefix, std::size_t width) {
    p.add(prefix + ".g", Matrix(1, width, 1.0));
    p.add(prefix + ".b", Matrix(1, width, 0.0));
}

std::string block_prefix(std::size_t k) { return "block" + std::to_string(k); }

}  // namespace

Parameters init_parameters(const ProbeConfig& config, std::size_t input_dim, std::uint64_t seed) {
    config.validate();
    if (input_dim == 0) throw ValidationError("probe input dimension must be positive");
    Rng rng(seed);
    Parameters p;
    const std::size_t w = config.width;
    switch (config.family) {
        case ProbeFamily::linear:
            add_affine(p, rng, "linear", input_dim, 1);
            break;
        case ProbeFamily::deepsets:
            for (std::size_t k = 0; k < config.depth; ++k) {
                add_affine(p, rng, "phi" + std::to_string(k), k == 0 ? input_dim : w, w);
            }
            add_affine(p, rng, "rho0", 2 * w, w);
            add_affine(p, rng, "rho_out", w, 1);
            break;
        case ProbeFamily::settransformer:
            add_affine(p, rng, "in", input_dim, w);
            for (std::size_t k = 0; k < config.depth; ++k) {
                const auto b = block_prefix(k);
                add_affine(p, rng, b + ".q", w, w);
                add_affine(p, rng, b + ".k", w, w);
                add_affine(p, rng, b + ".v", w, w);
                add_affine(p, rng, b + ".o", w, w);
                add_layer_norm(p, b + ".ln1", w);
                add_affine(p, rng, b + ".ff1", w, config.ff_width);
                add_affine(p, rng, b + ".ff2", config.ff_width, w);
                add_layer_norm(p, b + ".ln2", w);
            }
            add_affine(p, rng, "head", w, 1);
            break;
    }
    return p;
}

namespace {

class ForwardContext {
public:
    ForwardContext(ad::Tape& tape, std::span<const ad::Var> vars, const Parameters& params, Rng* rng, double dropout)
        : tape_(tape), params_(params), rng_(rng), dropout_(dropout) {
        if (vars.size() != params.names.size()) throw ValidationError("parameter/variable count mismatch");
        for (std::size_t k = 0; k < vars.size(); ++k) by_name_.emplace(params.names[k], vars[k]);
    }

    ad::Var p(const std::string& name) const {
        const auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ValidationError("probe has no parameter '" + name + "'");
        return it->second;
    }

    ad::Var affine(ad::Var x, const std::string& prefix) {
        return tape_.add_bias(tape_.matmul(x, p(prefix + ".w")), p(prefix + ".b"));
    }

    ad::Var drop(ad::Var x) { return rng_ ? tape_.dropout(x, dropout_, *rng_) : x; }

    ad::Var norm(ad::Var x, const std::string& prefix) {
        return tape_.layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
    }

    ad::Tape& tape() { return tape_; }

private:
    ad::Tape& tape_;
    const Parameters& params_;
    Rng* rng_;
    double dropout_;
    std::unordered_map<std::string, ad::Var> by_name_;
};

ad::Var attention(ForwardContext& ctx, ad::Var x, const std::string& b, std::size_t width, std::size_t heads) {
    auto& t = ctx.tape();
    const ad::Var q = ctx.affine(x, b + ".q");
    const ad::Var k = ctx.affine(x, b + ".k");
    const ad::Var v = ctx.affine(x, b + ".v");
    const std::size_t dh = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const ad::Var qh = t.slice_cols(q, h * dh, dh);
        const ad::Var kh = t.slice_cols(k, h * dh, dh);
        const ad::Var vh = t.slice_cols(v, h * dh, dh);
        const ad::Var weights = t.softmax_rows(t.scale(t.matmul_bt(qh, kh), inv_sqrt));
        outs.push_back(t.matmul(weights, vh));
    }
    const ad::Var merged = heads == 1 ? outs.front() : t.concat_cols(outs);
    return ctx.affine(merged, b + ".o");
}

}  // namespace

ad::Var probe_forward(ad::Tape& tape, std::span<const ad::Var> vars, const Parameters& params,
                      const ProbeConfig& config, const Matrix& features, Rng* dropout_rng) {
    if (features.rows == 0) throw ValidationError("probe needs at least one candidate");
    ForwardContext ctx(tape, vars, params, dropout_rng, config.dropout);
    const ad::Var x = tape.leaf(features);

    switch (config.family) {
        case ProbeFamily::linear: {
            if (params.get("linear.w").rows != features.cols) {
                throw ValidationError("feature dimension " + std::to_string(features.cols) +
                                      " does not match linear probe input " +
                                      std::to_string(params.get("linear.w").rows));
            }
            return ctx.affine(x, "linear");
        }
        case ProbeFamily::deepsets: {
            if (params.get("phi0.w").rows != features.cols) {
                throw ValidationError("feature dimension " + std::to_string(features.cols) +
                                      " does not match DeepSets input " + std::to_string(params.get("phi0.w").rows));
            }
            ad::Var h = x;
            for (std::size_t k = 0; k < config.depth; ++k) {
                h = ctx.drop(tape.relu(ctx.affine(h, "phi" + std::to_string(k))));
            }
            const ad::Var pooled = tape.broadcast_rows(tape.mean_rows(h), features.rows);
            const ad::Var parts[] = {h, pooled};
            const ad::Var r = ctx.drop(tape.relu(ctx.affine(tape.concat_cols(parts), "rho0")));
            return ctx.affine(r, "rho_out");
        }
        case ProbeFamily::settransformer: {
            if (params.get("in.w").rows != features.cols) {
                throw ValidationError("feature dimension " + std::to_string(features.cols) +
                                      " does not match transformer input " + std::to_string(params.get("in.w").rows));
            }
            ad::Var z = ctx.affine(x, "in");
            for (std::size_t k = 0; k < config.depth; ++k) {
                const auto b = block_prefix(k);
                const ad::Var attn = ctx.drop(attention(ctx, z, b, config.width, config.heads));
                z = ctx.norm(tape.add(z, attn), b + ".ln1");
                const ad::Var hidden = ctx.drop(tape.relu(ctx.affine(z, b + ".ff1")));
                const ad::Var ff = ctx.drop(ctx.affine(hidden, b + ".ff2"));
                z = ctx.norm(tape.add(z, ff), b + ".ln2");
            }
            return ctx.affine(z, "head");
        }
    }
    throw ValidationError("unknown probe family");
}

namespace {

std::vector<ad::Var> leaves(ad::Tape& tape, const Parameters& params) {
    std::vector<ad::Var> vars;
    vars.reserve(params.values.size());
    for (const auto& m : params.values) vars.push_back(tape.leaf(m));
    return vars;
}

std::vector<double> column(const Matrix& m) { return m.data; }

}  // namespace

std::vector<double> score_probe(const Parameters& params, const ProbeConfig& config, const Matrix& features) {
    ad::Tape tape;
    const auto vars = leaves(tape, params);
    return column(tape.value(probe_forward(tape, vars, params, config, features, nullptr)));
}

std::vector<double> score_linear(const Parameters& params, const Matrix& features) {
    ProbeConfig c;
    c.family = ProbeFamily::linear;
    return score_probe(params, c, features);
}

std::vector<double> score_deepsets(const Parameters& params, const ProbeConfig& config, const Matrix& features) {
    ProbeConfig c = config;
    c.family = ProbeFamily::deepsets;
    return score_probe(params, c, features);
}

std::vector<double> score_settransformer(const Parameters& params, const ProbeConfig& config,
                                         const Matrix& features) {
    ProbeConfig c = config;
    c.family = ProbeFamily::settransformer;
    return score_probe(params, c, features);
}

namespace {

std::vector<double> log_softmax(std::span<const double> s) {
    const double mx = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (double v : s) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] - lse;
    return out;
}

}  // namespace

LossResult compute_loss(Objective objective, std::span<const double> scores, std::span<const double> deltas,
                        const TargetScale* target, double tau) {
    if (scores.size() != deltas.size()) {
        throw ValidationError("loss: " + std::to_string(scores.size()) + " scores vs " +
                              std::to_string(deltas.size()) + " targets");
    }
    if (scores.empty()) throw ValidationError("loss over an empty candidate set");
    const std::size_t m = scores.size();
    const double inv_m = 1.0 / static_cast<double>(m);
    LossResult r;
    r.grad.assign(m, 0.0);

    switch (objective) {
        case Objective::regression: {
            if (!target) throw ValidationError("regression loss needs a target standardizer");
            for (std::size_t i = 0; i < m; ++i) {
                const double y = (deltas[i] - target->mean) / target->std;
                const double diff = scores[i] - y;
                r.loss += diff * diff * inv_m;
                r.grad[i] = 2.0 * diff * inv_m;
            }
            return r;
        }
        case Objective::hard_ce: {
            const std::size_t label = argmax_lowest(deltas);
            const auto ls = log_softmax(scores);
            r.loss = -ls[label];
            for (std::size_t i = 0; i < m; ++i) r.grad[i] = std::exp(ls[i]) - (i == label ? 1.0 : 0.0);
            return r;
        }
        case Objective::soft_ce: {
            if (!(tau > 0.0)) throw ValidationError("soft cross-entropy needs tau > 0");
            std::vector<double> scaled(m);
            for (std::size_t i = 0; i < m; ++i) scaled[i] = deltas[i] / tau;
            const auto lp = log_softmax(scaled);
            const auto ls = log_softmax(scores);
            for (std::size_t i = 0; i < m; ++i) {
                const double p = std::exp(lp[i]);
                r.loss -= p * ls[i];
                r.grad[i] = std::exp(ls[i]) - p;
            }
            return r;
        }
    }
    throw ValidationError("unknown objective");
}

Standardizer Standardizer::fit(std::span<const Matrix* const> train_features,
                               std::span<const std::vector<double>* const> train_targets, bool fit_target) {
    Standardizer s;
    if (train_features.empty()) throw ValidationError("cannot fit a standardizer on an empty training split");
    const std::size_t d = train_features.front()->cols;
    std::vector<double> sum(d, 0.0);
    std::size_t rows = 0;
    for (const Matrix* f : train_features) {
        if (f->cols != d) throw ValidationError("feature dimension differs across training instances");
        for (std::size_t r = 0; r < f->rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) sum[c] += (*f)(r, c);
        }
        rows += f->rows;
    }
    s.mean.resize(d);
    for (std::size_t c = 0; c < d; ++c) s.mean[c] = sum[c] / static_cast<double>(rows);
    std::vector<double> sq(d, 0.0);
    for (const Matrix* f : train_features) {
        for (std::size_t r = 0; r < f->rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) sq[c] += ((*f)(r, c) - s.mean[c]) * ((*f)(r, c) - s.mean[c]);
        }
    }
    s.std.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
        if (sd > 1e-12) {
            s.std[c] = sd;
        } else {
            s.std[c] = 1.0;
            s.flagged.push_back(c);
        }
    }
    if (fit_target) {
        double tsum = 0.0;
        std::size_t count = 0;
        for (const auto* t : train_targets) {
            for (double v : *t) tsum += v;
            count += t->size();
        }
        if (count == 0) throw ValidationError("cannot fit target statistics without targets");
        const double mu = tsum / static_cast<double>(count);
        double tsq = 0.0;
        for (const auto* t : train_targets) {
            for (double v : *t) tsq += (v - mu) * (v - mu);
        }
        const double sd = std::sqrt(tsq / static_cast<double>(count));
        s.target = TargetScale{mu, sd > 1e-12 ? sd : 1.0};
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& raw) const {
    if (raw.cols != mean.size()) {
        throw ValidationError("feature dimension " + std::to_string(raw.cols) + " does not match standardizer " +
                              std::to_string(mean.size()));
    }
    Matrix out = raw;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = (out(r, c) - mean[c]) / std[c];
    }
    return out;
}

double Standardizer::standardize_target(double y) const { return target ? (y - target->mean) / target->std : y; }

double Standardizer::unstandardize_target(double z) const { return target ? z * target->std + target->mean : z; }

const std::vector<std::string>& SplitSpec::get(std::string_view name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ValidationError("unknown split '" + std::string(name) + "' (expected train|val|test)");
}

SplitSpec make_splits(std::span<const std::string> ids, std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios) {
        if (r < 0.0) throw ValidationError("split ratios must be non-negative");
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    std::unordered_set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw ValidationError("duplicate instance ids cannot be split");

    std::vector<std::string> order(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(order));
    const auto total = static_cast<double>(order.size());
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * total));
    const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(ratios[1] * total)));
    SplitSpec s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    if (s.train.empty() || s.val.empty() || s.test.empty()) {
        throw ValidationError("split of " + std::to_string(order.size()) + " instances leaves an empty partition (" +
                              std::to_string(s.train.size()) + "/" + std::to_string(s.val.size()) + "/" +
                              std::to_string(s.test.size()) + ")");
    }
    return s;
}

void write_splits(const std::filesystem::path& path, const SplitSpec& s) {
    const json j = {{"kind", "splits"}, {"version", 1}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
    io::write_file(path, j.dump(2) + "\n");
}

SplitSpec read_splits(const std::filesystem::path& path) {
    try {
        const json j = json::parse(io::read_file(path));
        SplitSpec s;
        s.train = j.at("train").get<std::vector<std::string>>();
        s.val = j.at("val").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        std::unordered_set<std::string> seen;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
            for (const auto& id : *part) {
                if (!seen.insert(id).second) throw ValidationError("instance '" + id + "' appears in two splits");
            }
        }
        return s;
    } catch (const json::exception& e) {
        throw FormatError("malformed split file " + path.string() + ": " + e.what());
    }
}

double loss_and_gradients(const Parameters& params, const ProbeConfig& config, const Matrix& features,
                          std::span<const double> deltas, const TargetScale* target, Parameters* grads,
                          Rng* dropout_rng) {
    ad::Tape tape;
    const auto vars = leaves(tape, params);
    const ad::Var out = probe_forward(tape, vars, params, config, features, dropout_rng);
    const auto scores = column(tape.value(out));
    const auto loss = compute_loss(config.objective, scores, deltas, target, config.tau);
    if (grads) {
        Matrix seed(scores.size(), 1);
        seed.data = loss.grad;
        tape.backward(out, seed);
        grads->names = params.names;
        grads->values.resize(vars.size());
        for (std::size_t k = 0; k < vars.size(); ++k) grads->values[k] = tape.grad(vars[k]);
    }
    return loss.loss;
}

std::vector<double> TrainedProbe::score(const Matrix& raw_features) const {
    auto s = score_probe(params, config, standardizer.apply(raw_features));
    if (config.objective == Objective::regression) {
        for (double& v : s) v = standardizer.unstandardize_target(v);
    }
    return s;
}

namespace {

struct PreparedExample {
    const ProbeExample* source = nullptr;
    Matrix features;
};

struct ValMetrics {
    double loss = 0.0;
    double top1 = 0.0;
};

ValMetrics validate_params(const Parameters& params, const ProbeConfig& config, const Standardizer& st,
                           std::span<const PreparedExample> val) {
    ValMetrics m;
    if (val.empty()) return m;
    const TargetScale* target = st.target ? &*st.target : nullptr;
    for (const auto& ex : val) {
        ad::Tape tape;
        const auto vars = leaves(tape, params);
        const auto scores = column(tape.value(probe_forward(tape, vars, params, config, ex.features, nullptr)));
        m.loss += compute_loss(config.objective, scores, ex.source->deltas, target, config.tau).loss;
        m.top1 += topk_hit(scores, ex.source->deltas, 1);
    }
    m.loss /= static_cast<double>(val.size());
    m.top1 /= static_cast<double>(val.size());
    return m;
}

struct AdamW {
    double lr, wd, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;
    std::vector<Matrix> m, v;

    AdamW(const Parameters& p, double lr_, double wd_) : lr(lr_), wd(wd_) {
        for (const auto& x : p.values) {
            m.emplace_back(x.rows, x.cols);
            v.emplace_back(x.rows, x.cols);
        }
    }

    void apply(Parameters& p, const std::vector<Matrix>& g) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            auto& w = p.values[k].data;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[k].data[i];
                m[k].data[i] = beta1 * m[k].data[i] + (1.0 - beta1) * gi;
                v[k].data[i] = beta2 * v[k].data[i] + (1.0 - beta2) * gi * gi;
                const double mhat = m[k].data[i] / bc1;
                const double vhat = v[k].data[i] / bc2;
                w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
            }
        }
    }
};

bool improves(Selection sel, const ValMetrics& cand, const ValMetrics& best) {
    if (sel == Selection::val_loss) return cand.loss < best.loss;
    return cand.top1 > best.top1 || (cand.top1 == best.top1 && cand.loss < best.loss);
}

}  // namespace

TrainedProbe train_probe(const ProbeConfig& config, Task task, std::span<const ProbeExample> examples,
                         const SplitSpec& splits) {
    config.validate();
    std::unordered_map<std::string, const ProbeExample*> by_id;
    for (const auto& ex : examples) by_id.emplace(ex.instance_id, &ex);
    auto gather = [&](const std::vector<std::string>& ids, const char* name) {
        std::vector<const ProbeExample*> out;
        for (const auto& id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw AlignmentError(std::string(name) + " split instance '" + id + "' has no features/labels");
            }
            if (it->second->features.rows != it->second->deltas.size()) {
                throw AlignmentError("instance '" + id + "': feature rows and label count differ");
            }
            out.push_back(it->second);
        }
        return out;
    };
    const auto train = gather(splits.train, "train");
    const auto val = gather(splits.val, "val");
    if (train.empty()) throw ValidationError("training split is empty");

    std::vector<const Matrix*> train_x;
    std::vector<const std::vector<double>*> train_y;
    for (const auto* ex : train) {
        train_x.push_back(&ex->features);
        train_y.push_back(&ex->deltas);
    }

    TrainedProbe probe;
    probe.config = config;
    probe.task = task;
    probe.selection = config.resolved_selection();
    probe.standardizer = Standardizer::fit(train_x, train_y, config.objective == Objective::regression);
    probe.input_dim = train.front()->features.cols;
    probe.params = init_parameters(config, probe.input_dim, config.seed);

    auto prepare = [&](const std::vector<const ProbeExample*>& src) {
        std::vector<PreparedExample> out;
        out.reserve(src.size());
        for (const auto* ex : src) out.push_back({ex, probe.standardizer.apply(ex->features)});
        return out;
    };
    const auto train_set = prepare(train);
    const auto val_set = prepare(val);
    const TargetScale* target = probe.standardizer.target ? &*probe.standardizer.target : nullptr;

    Rng shuffle_rng(config.seed ^ 0xA5A5A5A5DEADBEEFULL);
    Rng dropout_rng(config.seed ^ 0x0123456789ABCDEFULL);
    AdamW opt(probe.params, config.lr, config.weight_decay);
    Parameters current = probe.params;
    ValMetrics best_val{std::numeric_limits<double>::infinity(), -1.0};

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            std::vector<Matrix> acc;
            for (const auto& v : current.values) acc.emplace_back(v.rows, v.cols);
            for (std::size_t b = start; b < end; ++b) {
                const auto& ex = train_set[order[b]];
                Parameters g;
                const double loss = loss_and_gradients(current, config, ex.features, ex.source->deltas, target, &g,
                                                       config.dropout > 0.0 ? &dropout_rng : nullptr);
                if (!std::isfinite(loss)) {
                    throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                                       " (instance '" + ex.source->instance_id + "'); try a smaller learning rate than " +
                                       std::to_string(config.lr));
                }
                epoch_loss += loss;
                for (std::size_t k = 0; k < acc.size(); ++k) {
                    for (std::size_t i = 0; i < acc[k].size(); ++i) acc[k].data[i] += inv_batch * g.values[k].data[i];
                }
            }
            opt.apply(current, acc);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
        const ValMetrics vm = validate_params(current, config, probe.standardizer, val_set);
        rec.val_loss = vm.loss;
        rec.val_top1 = vm.top1;
        probe.curve.push_back(rec);
        if (val_set.empty() || improves(probe.selection, vm, best_val)) {
            best_val = vm;
            probe.params = current;
            probe.best_epoch = epoch;
        }
    }
    return probe;
}

EvalReport evaluate_probe(const TrainedProbe& probe, std::span<const ProbeExample> examples,
                          const std::vector<std::string>& ids, const std::string& method) {
    std::unordered_map<std::string, const ProbeExample*> by_id;
    for (const auto& ex : examples) by_id.emplace(ex.instance_id, &ex);
    std::vector<InstanceMetrics> rows;
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw AlignmentError("no features/labels for instance '" + id + "'");
        SensitivityLabels l;
        l.instance_id = id;
        l.task = probe.task;
        l.deltas_pct = it->second->deltas;
        const CandidateScores s{id, probe.task, method, probe.score(it->second->features)};
        rows.push_back(evaluate_instance(s, l));
    }
    return aggregate(method, probe.task, std::move(rows));
}

MultiSeedReport train_multiseed(const ProbeConfig& config, Task task, std::span<const ProbeExample> examples,
                                const SplitSpec& splits, std::span<const std::uint64_t> seeds, int workers) {
    if (seeds.empty()) throw ValidationError("multi-seed training needs at least one seed");
    MultiSeedReport rep;
    rep.runs.resize(seeds.size());
    const auto count = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        auto& run = rep.runs[static_cast<std::size_t>(i)];
        run.seed = seeds[static_cast<std::size_t>(i)];
        try {
            ProbeConfig c = config;
            c.seed = run.seed;
            const auto probe = train_probe(c, task, examples, splits);
            const auto r = evaluate_probe(probe, examples, splits.test, "probe");
            run.top1 = r.mean_top1;
            run.top5 = r.mean_top5;
            run.rho = r.mean_rho;
            run.ok = true;
        } catch (const std::exception& e) {
            run.error = e.what();
        }
    }
    std::vector<double> t1, t5, rho;
    for (const auto& r : rep.runs) {
        if (!r.ok) {
            ++rep.failed;
            continue;
        }
        t1.push_back(r.top1);
        t5.push_back(r.top5);
        rho.push_back(r.rho);
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        sd = std::sqrt(acc / static_cast<double>(v.size()));
    };
    stats(t1, rep.mean_top1, rep.std_top1);
    stats(t5, rep.mean_top5, rep.std_top5);
    stats(rho, rep.mean_rho, rep.std_rho);
    return rep;
}

namespace {

json config_to_json(const ProbeConfig& c) {
    json j = {{"family", to_string(c.family)},
              {"objective", to_string(c.objective)},
              {"tau", c.tau},
              {"width", c.width},
              {"depth", c.depth},
              {"heads", c.heads},
              {"ff_width", c.ff_width},
              {"dropout", c.dropout},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
    j["selection"] = c.selection ? json(to_string(*c.selection)) : json(nullptr);
    return j;
}

ProbeConfig config_from_json(const json& j) {
    ProbeConfig c;
    c.family = parse_family(j.at("family").get<std::string>());
    c.objective = parse_objective(j.at("objective").get<std::string>());
    c.tau = j.at("tau").get<double>();
    c.width = j.at("width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ff_width = j.at("ff_width").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("selection") && !j["selection"].is_null()) {
        c.selection = parse_selection(j["selection"].get<std::string>());
    }
    return c;
}

}  // namespace

std::string probe_to_json(const TrainedProbe& p) {
    json params = json::array();
    for (std::size_t k = 0; k < p.params.names.size(); ++k) {
        const auto& m = p.params.values[k];
        params.push_back({{"name", p.params.names[k]}, {"rows", m.rows}, {"cols", m.cols}, {"data", m.data}});
    }
    json st = {{"mean", p.standardizer.mean}, {"std", p.standardizer.std}, {"flagged", p.standardizer.flagged}};
    if (p.standardizer.target) {
        st["target"] = {{"mean", p.standardizer.target->mean}, {"std", p.standardizer.target->std}};
    } else {
        st["target"] = nullptr;
    }
    json curve = json::array();
    for (const auto& e : p.curve) {
        curve.push_back(
            {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_top1", e.val_top1}});
    }
    const json j = {{"format", "tspsens.probe"},
                    {"version", kProbeFormatVersion},
                    {"task", to_string(p.task)},
                    {"input_dim", p.input_dim},
                    {"selection", to_string(p.selection)},
                    {"best_epoch", p.best_epoch},
                    {"config", config_to_json(p.config)},
                    {"standardizer", st},
                    {"params", params},
                    {"curve", curve}};
    return j.dump();
}

TrainedProbe probe_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != "tspsens.probe") throw FormatError("not a probe file");
        if (j.value("version", 0) != kProbeFormatVersion) {
            throw FormatError("unsupported probe file version " + std::to_string(j.value("version", 0)));
        }
        TrainedProbe p;
        p.task = parse_task(j.at("task").get<std::string>());
        p.input_dim = j.at("input_dim").get<std::size_t>();
        p.selection = parse_selection(j.at("selection").get<std::string>());
        p.best_epoch = j.at("best_epoch").get<std::size_t>();
        p.config = config_from_json(j.at("config"));
        const auto& st = j.at("standardizer");
        p.standardizer.mean = st.at("mean").get<std::vector<double>>();
        p.standardizer.std = st.at("std").get<std::vector<double>>();
        p.standardizer.flagged = st.at("flagged").get<std::vector<std::size_t>>();
        if (!st.at("target").is_null()) {
            p.standardizer.target = TargetScale{st["target"].at("mean").get<double>(), st["target"].at("std").get<double>()};
        }
        for (const auto& e : j.at("params")) {
            Matrix m(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
            m.data = e.at("data").get<std::vector<double>>();
            if (m.data.size() != m.rows * m.cols) throw FormatError("parameter block has the wrong size");
            p.params.add(e.at("name").get<std::string>(), std::move(m));
        }
        for (const auto& e : j.at("curve")) {
            p.curve.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                               e.at("val_loss").get<double>(), e.at("val_top1").get<double>()});
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed probe file: ") + e.what());
    }
}

void save_probe(const std::filesystem::path& path, const TrainedProbe& probe) {
    io::write_file(path, probe_to_json(probe) + "\n");
}

TrainedProbe load_probe(const std::filesystem::path& path) { return probe_from_json(io::read_file(path)); }

}  // namespace tspsens
