#include "csr/model.hpp"

#include <algorithm>
#include <cmath>

namespace csr {

int AnswerDistribution::argmax() const {
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

int predict(const AnswerDistribution& dist) {
    if (dist.probs.empty()) throw std::invalid_argument("predict: empty distribution");
    return dist.argmax();
}

void ModelConfig::validate() const {
    if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
    if (token_vocab < 1) throw std::invalid_argument("token_vocab must be >= 1");
    if (answer_count < 2) throw std::invalid_argument("answer_count must be >= 2");
    if (eps_floor <= 0 || eps_floor * answer_count >= 1.0)
        throw std::invalid_argument("eps_floor out of range");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"embed_dim", embed_dim},
                          {"token_vocab", token_vocab},
                          {"answer_count", answer_count},
                          {"eps_floor", eps_floor}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.token_vocab = j.at("token_vocab").get<int>();
    cfg.answer_count = j.at("answer_count").get<int>();
    cfg.eps_floor = j.at("eps_floor").get<double>();
    return cfg;
}

namespace {

void fill_normal(Mat& m, Rng& rng, double sd) {
    for (double& v : m.data) v = rng.normal(0.0, sd);
}

// Fixed sinusoidal encoding over both the forward index and the distance
// from the end, so "last step" is directly addressable at any length.
void positional_encoding(int i, int n, int d, std::vector<double>* out) {
    out->assign(d, 0.0);
    const int half = d / 2;
    auto fill = [&](int base, int len, double pos) {
        for (int k = 0; k + 1 < len; k += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(k) / len);
            (*out)[base + k] = std::sin(pos * freq);
            (*out)[base + k + 1] = std::cos(pos * freq);
        }
    };
    fill(0, half, static_cast<double>(i));
    fill(half, d - half, static_cast<double>(n - 1 - i));
}

struct ForwardCache {
    int n = 0;
    std::vector<int> tokens;
    Mat x, q, k, v, attn, ctx, h;  // attn holds softmaxed scores
    std::vector<double> pooled, z1;
    std::vector<double> soft;    // pre-smoothing softmax
    AnswerDistribution dist;
};

void matmul(const Mat& a, const Mat& b, Mat* out) {
    // out = a * b
    out->rows = a.rows;
    out->cols = b.cols;
    out->data.assign(static_cast<std::size_t>(a.rows) * b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        for (int kk = 0; kk < a.cols; ++kk) {
            const double av = a.at(i, kk);
            if (av == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out->at(i, j) += av * b.at(kk, j);
        }
    }
}

void run_forward(const ModelParams& params, const TokenSequence& seq,
                 double answer_temp, ForwardCache* cache) {
    const ModelConfig& cfg = params.cfg;
    cfg.validate();
    if (answer_temp <= 0) throw std::invalid_argument("answer_temp must be > 0");
    if (seq.tokens.empty()) throw std::invalid_argument("forward: empty sequence");

    const int n = static_cast<int>(seq.tokens.size());
    const int d = cfg.embed_dim;
    cache->n = n;
    cache->tokens = seq.tokens;

    cache->x = Mat(n, d);
    std::vector<double> pos;
    for (int i = 0; i < n; ++i) {
        const int tok = seq.tokens[i];
        if (tok < 0 || tok >= cfg.token_vocab)
            throw std::invalid_argument("forward: unknown token id " + std::to_string(tok));
        positional_encoding(i, n, d, &pos);
        for (int j = 0; j < d; ++j) cache->x.at(i, j) = params.embed.at(tok, j) + pos[j];
    }

    matmul(cache->x, params.wq, &cache->q);
    matmul(cache->x, params.wk, &cache->k);
    matmul(cache->x, params.wv, &cache->v);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    cache->attn = Mat(n, n);
    for (int i = 0; i < n; ++i) {
        double maxs = -1e300;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += cache->q.at(i, a) * cache->k.at(j, a);
            s *= inv_sqrt_d;
            cache->attn.at(i, j) = s;
            maxs = std::max(maxs, s);
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(cache->attn.at(i, j) - maxs);
            cache->attn.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j) cache->attn.at(i, j) /= sum;
    }

    matmul(cache->attn, cache->v, &cache->ctx);  // ctx = attn * v
    Mat projected;
    matmul(cache->ctx, params.wo, &projected);

    cache->h = Mat(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            cache->h.at(i, j) = cache->x.at(i, j) + projected.at(i, j);

    cache->pooled.assign(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) cache->pooled[j] += cache->h.at(i, j) / n;

    cache->z1.assign(d, 0.0);
    for (int j = 0; j < d; ++j) {
        double u = params.b1[j];
        for (int i = 0; i < d; ++i) u += cache->pooled[i] * params.w1.at(i, j);
        cache->z1[j] = std::tanh(u);
    }

    const int vocab = cfg.answer_count;
    std::vector<double> logits(vocab, 0.0);
    for (int kk = 0; kk < vocab; ++kk) {
        double s = params.b2[kk];
        for (int j = 0; j < d; ++j) s += cache->z1[j] * params.w2.at(j, kk);
        logits[kk] = s / answer_temp;
    }
    double maxl = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    cache->soft.assign(vocab, 0.0);
    for (int kk = 0; kk < vocab; ++kk) {
        cache->soft[kk] = std::exp(logits[kk] - maxl);
        sum += cache->soft[kk];
    }
    for (int kk = 0; kk < vocab; ++kk) cache->soft[kk] /= sum;

    const double eps = cfg.eps_floor;
    const double keep = 1.0 - eps * vocab;
    cache->dist.probs.assign(vocab, 0.0);
    cache->dist.log_probs.assign(vocab, 0.0);
    cache->dist.temperature_applied = answer_temp;
    for (int kk = 0; kk < vocab; ++kk) {
        cache->dist.probs[kk] = keep * cache->soft[kk] + eps;
        cache->dist.log_probs[kk] = std::log(cache->dist.probs[kk]);
    }
}

// Backprop from d(loss)/d(prob) through one cached forward pass.
void run_backward(const ModelParams& params, const ForwardCache& cache,
                  const std::vector<double>& dprobs, double answer_temp,
                  GradientBundle* grad) {
    const ModelConfig& cfg = params.cfg;
    const int n = cache.n;
    const int d = cfg.embed_dim;
    const int vocab = cfg.answer_count;

    // smoothing then softmax-with-temperature
    const double keep = 1.0 - cfg.eps_floor * vocab;
    std::vector<double> dsoft(vocab);
    for (int kk = 0; kk < vocab; ++kk) dsoft[kk] = keep * dprobs[kk];
    double inner = 0.0;
    for (int kk = 0; kk < vocab; ++kk) inner += cache.soft[kk] * dsoft[kk];
    std::vector<double> dlogits(vocab);
    for (int kk = 0; kk < vocab; ++kk)
        dlogits[kk] = cache.soft[kk] * (dsoft[kk] - inner) / answer_temp;

    // answer head
    std::vector<double> dz1(d, 0.0);
    for (int kk = 0; kk < vocab; ++kk) {
        grad->b2[kk] += dlogits[kk];
        for (int j = 0; j < d; ++j) {
            grad->w2.at(j, kk) += cache.z1[j] * dlogits[kk];
            dz1[j] += params.w2.at(j, kk) * dlogits[kk];
        }
    }

    // tanh MLP
    std::vector<double> dpooled(d, 0.0);
    for (int j = 0; j < d; ++j) {
        const double du = dz1[j] * (1.0 - cache.z1[j] * cache.z1[j]);
        grad->b1[j] += du;
        for (int i = 0; i < d; ++i) {
            grad->w1.at(i, j) += cache.pooled[i] * du;
            dpooled[i] += params.w1.at(i, j) * du;
        }
    }

    // mean pooling and residual
    Mat dh(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) dh.at(i, j) = dpooled[j] / n;
    Mat dx = dh;  // residual branch

    // output projection: projected = ctx * wo, ctx = attn*v
    Mat dav(n, d);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += cache.ctx.at(i, a) * dh.at(i, b);
            grad->wo.at(a, b) += s;
        }
    }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            double s = 0.0;
            for (int b = 0; b < d; ++b) s += dh.at(i, b) * params.wo.at(a, b);
            dav.at(i, a) = s;
        }

    // attention application: av = attn * v
    Mat dattn(n, n);
    Mat dv(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += dav.at(i, a) * cache.v.at(j, a);
            dattn.at(i, j) = s;
        }
    }
    for (int j = 0; j < n; ++j)
        for (int a = 0; a < d; ++a) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += cache.attn.at(i, j) * dav.at(i, a);
            dv.at(j, a) = s;
        }

    // softmax rows
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Mat dscores(n, n);
    for (int i = 0; i < n; ++i) {
        double row_inner = 0.0;
        for (int j = 0; j < n; ++j) row_inner += cache.attn.at(i, j) * dattn.at(i, j);
        for (int j = 0; j < n; ++j)
            dscores.at(i, j) =
                cache.attn.at(i, j) * (dattn.at(i, j) - row_inner) * inv_sqrt_d;
    }

    // scores = q * k^T
    Mat dq(n, d), dk(n, d);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += dscores.at(i, j) * cache.k.at(j, a);
            dq.at(i, a) = s;
        }
    for (int j = 0; j < n; ++j)
        for (int a = 0; a < d; ++a) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += dscores.at(i, j) * cache.q.at(i, a);
            dk.at(j, a) = s;
        }

    // projections q = x*wq etc.
    auto proj_backward = [&](const Mat& dout, const Mat& w, Mat* gw) {
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += cache.x.at(i, a) * dout.at(i, b);
                gw->at(a, b) += s;
            }
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < d; ++a) {
                double s = 0.0;
                for (int b = 0; b < d; ++b) s += dout.at(i, b) * w.at(a, b);
                dx.at(i, a) += s;
            }
    };
    proj_backward(dq, params.wq, &grad->wq);
    proj_backward(dk, params.wk, &grad->wk);
    proj_backward(dv, params.wv, &grad->wv);

    for (int i = 0; i < n; ++i) {
        const int tok = cache.tokens[i];
        for (int j = 0; j < d; ++j) grad->embed.at(tok, j) += dx.at(i, j);
    }
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.embed_dim;
    p.embed = Mat(cfg.token_vocab, d);
    p.wq = Mat(d, d);
    p.wk = Mat(d, d);
    p.wv = Mat(d, d);
    p.wo = Mat(d, d);
    p.w1 = Mat(d, d);
    p.b1.assign(d, 0.0);
    p.w2 = Mat(d, cfg.answer_count);
    p.b2.assign(cfg.answer_count, 0.0);

    Rng rng(seed);
    const double wsd = 1.0 / std::sqrt(static_cast<double>(d));
    fill_normal(p.embed, rng, 0.5);
    fill_normal(p.wq, rng, wsd);
    fill_normal(p.wk, rng, wsd);
    fill_normal(p.wv, rng, wsd);
    fill_normal(p.wo, rng, wsd);
    fill_normal(p.w1, rng, wsd);
    fill_normal(p.w2, rng, wsd);
    return p;
}

namespace {

template <typename Self, typename Fn>
void for_each_array(Self& self, Fn&& fn) {
    fn(self.embed.data);
    fn(self.wq.data);
    fn(self.wk.data);
    fn(self.wv.data);
    fn(self.wo.data);
    fn(self.w1.data);
    fn(self.b1);
    fn(self.w2.data);
    fn(self.b2);
}

}  // namespace

std::size_t ModelParams::param_count() const {
    std::size_t n = 0;
    for_each_array(*this, [&](const std::vector<double>& a) { n += a.size(); });
    return n;
}

double* ModelParams::param_at(std::size_t i) {
    double* out = nullptr;
    for_each_array(*this, [&](std::vector<double>& a) {
        if (out) return;
        if (i < a.size()) {
            out = &a[i];
        } else {
            i -= a.size();
        }
    });
    if (!out) throw std::out_of_range("param_at");
    return out;
}

double ModelParams::param_at(std::size_t i) const {
    return *const_cast<ModelParams*>(this)->param_at(i);
}

nlohmann::json ModelParams::to_checkpoint() const {
    nlohmann::json arrays;
    arrays["embed"] = embed.data;
    arrays["wq"] = wq.data;
    arrays["wk"] = wk.data;
    arrays["wv"] = wv.data;
    arrays["wo"] = wo.data;
    arrays["w1"] = w1.data;
    arrays["b1"] = b1;
    arrays["w2"] = w2.data;
    arrays["b2"] = b2;
    return nlohmann::json{{"format_version", 1},
                          {"model_config", cfg.to_json()},
                          {"config_hash", fnv1a(cfg.to_json().dump())},
                          {"params", arrays}};
}

ModelParams ModelParams::from_checkpoint(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported checkpoint format version");
    ModelParams p = init(ModelConfig::from_json(j.at("model_config")), 0);
    const auto& arrays = j.at("params");
    auto load = [&](const char* name, std::vector<double>& dst) {
        const auto& a = arrays.at(name);
        if (a.size() != dst.size())
            throw std::runtime_error(std::string("checkpoint array size mismatch: ") + name);
        dst = a.get<std::vector<double>>();
    };
    load("embed", p.embed.data);
    load("wq", p.wq.data);
    load("wk", p.wk.data);
    load("wv", p.wv.data);
    load("wo", p.wo.data);
    load("w1", p.w1.data);
    load("b1", p.b1);
    load("w2", p.w2.data);
    load("b2", p.b2);
    return p;
}

GradientBundle GradientBundle::zeros_like(const ModelParams& p) {
    GradientBundle g;
    const int d = p.cfg.embed_dim;
    g.embed = Mat(p.cfg.token_vocab, d);
    g.wq = Mat(d, d);
    g.wk = Mat(d, d);
    g.wv = Mat(d, d);
    g.wo = Mat(d, d);
    g.w1 = Mat(d, d);
    g.b1.assign(d, 0.0);
    g.w2 = Mat(d, p.cfg.answer_count);
    g.b2.assign(p.cfg.answer_count, 0.0);
    return g;
}

void GradientBundle::zero() {
    for_each_array(*this, [](std::vector<double>& a) {
        std::fill(a.begin(), a.end(), 0.0);
    });
}

void GradientBundle::add_scaled(const GradientBundle& g, double s) {
    auto it = [&](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
    };
    it(embed.data, g.embed.data);
    it(wq.data, g.wq.data);
    it(wk.data, g.wk.data);
    it(wv.data, g.wv.data);
    it(wo.data, g.wo.data);
    it(w1.data, g.w1.data);
    it(b1, g.b1);
    it(w2.data, g.w2.data);
    it(b2, g.b2);
}

void GradientBundle::scale(double s) {
    for_each_array(*this, [s](std::vector<double>& a) {
        for (double& v : a) v *= s;
    });
}

std::size_t GradientBundle::param_count() const {
    std::size_t n = 0;
    for_each_array(*this, [&](const std::vector<double>& a) { n += a.size(); });
    return n;
}

double GradientBundle::param_at(std::size_t i) const {
    double out = 0.0;
    bool found = false;
    for_each_array(*this, [&](const std::vector<double>& a) {
        if (found) return;
        if (i < a.size()) {
            out = a[i];
            found = true;
        } else {
            i -= a.size();
        }
    });
    if (!found) throw std::out_of_range("param_at");
    return out;
}

bool GradientBundle::all_finite() const {
    bool ok = true;
    for_each_array(*this, [&](const std::vector<double>& a) {
        for (double v : a) {
            if (!std::isfinite(v)) ok = false;
        }
    });
    return ok;
}

AnswerDistribution forward(const ModelParams& params, const TokenSequence& seq,
                           double answer_temp) {
    ForwardCache cache;
    run_forward(params, seq, answer_temp, &cache);
    return cache.dist;
}

std::string divergence_name(DivergenceKind kind) {
    switch (kind) {
        case DivergenceKind::kl: return "kl";
        case DivergenceKind::js: return "js";
        case DivergenceKind::tv: return "tv";
    }
    throw std::logic_error("divergence_name");
}

DivergenceKind divergence_from_name(const std::string& name) {
    if (name == "kl") return DivergenceKind::kl;
    if (name == "js") return DivergenceKind::js;
    if (name == "tv") return DivergenceKind::tv;
    throw std::invalid_argument("unknown divergence: " + name);
}

double task_loss(const AnswerDistribution& dist, int y_true) {
    if (y_true < 0 || y_true >= static_cast<int>(dist.probs.size()))
        throw std::invalid_argument("task_loss: label outside answer vocabulary");
    return -dist.log_probs[y_true];
}

double divergence(const AnswerDistribution& p, const AnswerDistribution& p_cf,
                  DivergenceKind kind) {
    if (p.probs.size() != p_cf.probs.size())
        throw std::invalid_argument("divergence: size mismatch");
    const std::size_t n = p.probs.size();
    double out = 0.0;
    switch (kind) {
        case DivergenceKind::kl:
            for (std::size_t i = 0; i < n; ++i)
                out += p.probs[i] * (p.log_probs[i] - p_cf.log_probs[i]);
            break;
        case DivergenceKind::js:
            for (std::size_t i = 0; i < n; ++i) {
                const double m = 0.5 * (p.probs[i] + p_cf.probs[i]);
                out += 0.5 * p.probs[i] * (p.log_probs[i] - std::log(m));
                out += 0.5 * p_cf.probs[i] * (p_cf.log_probs[i] - std::log(m));
            }
            break;
        case DivergenceKind::tv:
            for (std::size_t i = 0; i < n; ++i)
                out += 0.5 * std::abs(p.probs[i] - p_cf.probs[i]);
            break;
    }
    return std::max(out, 0.0);
}

BackwardResult backward(const ModelParams& params, const LossSpec& spec,
                        GradientBundle* grad) {
    if (!spec.original) throw std::invalid_argument("backward: missing original sequence");

    ForwardCache orig;
    run_forward(params, *spec.original, spec.answer_temp, &orig);

    BackwardResult res;
    res.l_task = task_loss(orig.dist, spec.y_true);

    const int vocab = params.cfg.answer_count;
    std::vector<double> dp(vocab, 0.0);
    dp[spec.y_true] = -1.0 / orig.dist.probs[spec.y_true];

    if (spec.counterfactual) {
        ForwardCache cf;
        run_forward(params, *spec.counterfactual, spec.answer_temp, &cf);
        res.l_csr = divergence(orig.dist, cf.dist, spec.div);

        // Clip caps the CSR contribution; past it the term is constant.
        const bool clipped = res.l_csr > spec.csr_clip;
        res.loss = res.l_task - spec.lambda * std::min(res.l_csr, spec.csr_clip);
        if (!std::isfinite(res.loss))
            throw NonFiniteLossError("non-finite combined loss (csr term " +
                                     std::to_string(res.l_csr) + ")");

        if (spec.lambda != 0.0 && !clipped) {
            std::vector<double> dp_cf(vocab, 0.0);
            const double w = -spec.lambda;
            switch (spec.div) {
                case DivergenceKind::kl:
                    for (int i = 0; i < vocab; ++i) {
                        dp[i] += w * (orig.dist.log_probs[i] - cf.dist.log_probs[i] + 1.0);
                        dp_cf[i] = w * (-orig.dist.probs[i] / cf.dist.probs[i]);
                    }
                    break;
                case DivergenceKind::js:
                    for (int i = 0; i < vocab; ++i) {
                        const double lm =
                            std::log(0.5 * (orig.dist.probs[i] + cf.dist.probs[i]));
                        dp[i] += w * 0.5 * (orig.dist.log_probs[i] - lm);
                        dp_cf[i] = w * 0.5 * (cf.dist.log_probs[i] - lm);
                    }
                    break;
                case DivergenceKind::tv:
                    for (int i = 0; i < vocab; ++i) {
                        const double diff = orig.dist.probs[i] - cf.dist.probs[i];
                        const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                        dp[i] += w * 0.5 * sign;
                        dp_cf[i] = -w * 0.5 * sign;
                    }
                    break;
            }
            if (grad) run_backward(params, cf, dp_cf, spec.answer_temp, grad);
        }
    } else {
        res.loss = res.l_task;
        if (!std::isfinite(res.loss)) throw NonFiniteLossError("non-finite task loss");
    }

    if (grad) run_backward(params, orig, dp, spec.answer_temp, grad);
    return res;
}

}  // namespace csr
