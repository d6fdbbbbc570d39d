#include "eegcsr/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eegcsr::nn {

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_matrix(std::size_t rows, std::size_t cols, double limit, Rng* rng) {
    Tensor t({rows, cols});
    if (rng != nullptr) {
        for (double& v : t.values()) v = rng->uniform(-limit, limit);
    }
    return t;
}

// y += A x  with A [m x n]
void matvec_acc(const Tensor& a, const double* x, double* y) {
    const std::size_t m = a.rows(), n = a.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
}

// y += A^T x  with A [m x n], x length m, y length n
void matTvec_acc(const Tensor& a, const double* x, double* y) {
    const std::size_t m = a.rows(), n = a.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.row_ptr(i);
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * row[j];
    }
}

// G += u v^T  with u length m, v length n, G [m x n]
void outer_acc(Tensor& g, const double* u, const double* v) {
    const std::size_t m = g.rows(), n = g.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = g.row_ptr(i);
        const double ui = u[i];
        if (ui == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) row[j] += ui * v[j];
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_input(const Tensor& x, std::size_t d_in, const std::string& layer) {
    if (x.rank() != 2)
        throw std::invalid_argument(layer + ": expected a [T x D] input, got rank " +
                                    std::to_string(x.rank()));
    if (x.cols() != d_in)
        throw std::invalid_argument(layer + ": expected " + std::to_string(d_in) +
                                    " input columns, got " + std::to_string(x.cols()));
}

} // namespace

void Layer::zero_grads() {
    for (ParamRef& p : params()) p.grad->fill(0.0);
}

void Layer::require_cache(const char* op) const {
    if (!has_cache_)
        throw std::logic_error(name() + ": " + op + " called without a preceding forward pass");
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::string name, std::size_t d_in, std::size_t d_out, Rng* rng)
    : Layer(std::move(name)),
      d_in_(d_in),
      d_out_(d_out),
      w_(glorot_matrix(d_out, d_in, glorot_limit(d_in, d_out), rng)),
      b_({d_out}),
      gw_({d_out, d_in}),
      gb_({d_out}) {
    if (d_in == 0 || d_out == 0)
        throw std::invalid_argument("dense layer dimensions must be positive");
}

Tensor Dense::forward(const Tensor& x, const RunContext&) {
    check_input(x, d_in_, name());
    const std::size_t T = x.rows();
    Tensor y({T, d_out_});
    for (std::size_t t = 0; t < T; ++t) {
        double* out = y.row_ptr(t);
        for (std::size_t i = 0; i < d_out_; ++i) out[i] = b_[i];
        matvec_acc(w_, x.row_ptr(t), out);
    }
    x_cache_ = x;
    has_cache_ = true;
    return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
    require_cache("backward");
    check_input(grad_out, d_out_, name() + " (upstream gradient)");
    const std::size_t T = x_cache_.rows();
    if (grad_out.rows() != T)
        throw std::invalid_argument(name() + ": upstream gradient has " +
                                    std::to_string(grad_out.rows()) + " rows, forward saw " +
                                    std::to_string(T));
    Tensor gx({T, d_in_});
    for (std::size_t t = 0; t < T; ++t) {
        const double* g = grad_out.row_ptr(t);
        outer_acc(gw_, g, x_cache_.row_ptr(t));
        for (std::size_t i = 0; i < d_out_; ++i) gb_[i] += g[i];
        matTvec_acc(w_, g, gx.row_ptr(t));
    }
    has_cache_ = false;
    return gx;
}

std::vector<ParamRef> Dense::params() {
    return {{name(), "W", &w_, &gw_, true}, {name(), "b", &b_, &gb_, true}};
}

std::size_t Dense::output_dim(std::size_t) const { return d_out_; }

std::string Dense::descriptor() const {
    std::ostringstream os;
    os << "dense in=" << d_in_ << " out=" << d_out_;
    return os.str();
}

// ---------------------------------------------------------------------------
// Gru

Gru::Gru(std::string name, std::size_t d_in, std::size_t hidden, Rng* rng, double output_dropout)
    : Layer(std::move(name)),
      d_in_(d_in),
      hidden_(hidden),
      dropout_rate_(output_dropout),
      wz_(glorot_matrix(hidden, d_in, glorot_limit(d_in, hidden), rng)),
      wr_(glorot_matrix(hidden, d_in, glorot_limit(d_in, hidden), rng)),
      wh_(glorot_matrix(hidden, d_in, glorot_limit(d_in, hidden), rng)),
      uz_(glorot_matrix(hidden, hidden, glorot_limit(hidden, hidden), rng)),
      ur_(glorot_matrix(hidden, hidden, glorot_limit(hidden, hidden), rng)),
      uh_(glorot_matrix(hidden, hidden, glorot_limit(hidden, hidden), rng)),
      bz_({hidden}),
      br_({hidden}),
      bh_({hidden}),
      gwz_({hidden, d_in}),
      gwr_({hidden, d_in}),
      gwh_({hidden, d_in}),
      guz_({hidden, hidden}),
      gur_({hidden, hidden}),
      guh_({hidden, hidden}),
      gbz_({hidden}),
      gbr_({hidden}),
      gbh_({hidden}) {
    if (d_in == 0 || hidden == 0)
        throw std::invalid_argument("gru layer dimensions must be positive");
    if (output_dropout < 0.0 || output_dropout >= 1.0)
        throw std::invalid_argument("gru dropout rate must lie in [0, 1), got " +
                                    std::to_string(output_dropout));
}

Tensor Gru::forward(const Tensor& x, const RunContext& ctx) {
    check_input(x, d_in_, name());
    const std::size_t T = x.rows();
    const std::size_t H = hidden_;
    z_cache_ = Tensor({T, H});
    r_cache_ = Tensor({T, H});
    hc_cache_ = Tensor({T, H});
    h_cache_ = Tensor({T, H});
    std::vector<double> h(H, 0.0), az(H), ar(H), ah(H), rh(H);
    for (std::size_t t = 0; t < T; ++t) {
        const double* xt = x.row_ptr(t);
        for (std::size_t i = 0; i < H; ++i) {
            az[i] = bz_[i];
            ar[i] = br_[i];
        }
        matvec_acc(wz_, xt, az.data());
        matvec_acc(uz_, h.data(), az.data());
        matvec_acc(wr_, xt, ar.data());
        matvec_acc(ur_, h.data(), ar.data());
        double* zr = z_cache_.row_ptr(t);
        double* rr = r_cache_.row_ptr(t);
        for (std::size_t i = 0; i < H; ++i) {
            zr[i] = sigmoid(az[i]);
            rr[i] = sigmoid(ar[i]);
            rh[i] = rr[i] * h[i];
        }
        for (std::size_t i = 0; i < H; ++i) ah[i] = bh_[i];
        matvec_acc(wh_, xt, ah.data());
        matvec_acc(uh_, rh.data(), ah.data());
        double* hcr = hc_cache_.row_ptr(t);
        double* hr = h_cache_.row_ptr(t);
        for (std::size_t i = 0; i < H; ++i) {
            hcr[i] = std::tanh(ah[i]);
            hr[i] = (1.0 - zr[i]) * h[i] + zr[i] * hcr[i];
            h[i] = hr[i];
        }
    }

    Tensor y = h_cache_;
    mask_active_ = false;
    if (dropout_rate_ > 0.0 && ctx.mode == Mode::kTrain) {
        if (ctx.rng == nullptr)
            throw std::logic_error(name() + ": train-mode forward with dropout needs an rng");
        mask_cache_ = Tensor({T, H});
        const double keep = 1.0 - dropout_rate_;
        for (std::size_t i = 0; i < T * H; ++i) {
            const double m = ctx.rng->uniform() < dropout_rate_ ? 0.0 : 1.0 / keep;
            mask_cache_[i] = m;
            y[i] *= m;
        }
        mask_active_ = true;
    }
    x_cache_ = x;
    has_cache_ = true;
    return y;
}

Tensor Gru::backward(const Tensor& grad_out) {
    require_cache("backward");
    check_input(grad_out, hidden_, name() + " (upstream gradient)");
    const std::size_t T = x_cache_.rows();
    const std::size_t H = hidden_;
    if (grad_out.rows() != T)
        throw std::invalid_argument(name() + ": upstream gradient has " +
                                    std::to_string(grad_out.rows()) + " rows, forward saw " +
                                    std::to_string(T));
    Tensor gx({T, d_in_});
    std::vector<double> carry(H, 0.0); // dL/dh_t flowing from later steps
    std::vector<double> dh(H), dz(H), dr(H), dhc(H), daz(H), dar(H), dah(H);
    std::vector<double> hprev(H), rh(H), drh(H);
    for (std::size_t ti = T; ti-- > 0;) {
        const double* g = grad_out.row_ptr(ti);
        const double* z = z_cache_.row_ptr(ti);
        const double* r = r_cache_.row_ptr(ti);
        const double* hc = hc_cache_.row_ptr(ti);
        if (ti == 0) {
            for (std::size_t i = 0; i < H; ++i) hprev[i] = 0.0;
        } else {
            const double* hp = h_cache_.row_ptr(ti - 1);
            for (std::size_t i = 0; i < H; ++i) hprev[i] = hp[i];
        }
        for (std::size_t i = 0; i < H; ++i) {
            double up = g[i];
            if (mask_active_) up *= mask_cache_.at(ti, i);
            dh[i] = up + carry[i];
            dz[i] = dh[i] * (hc[i] - hprev[i]);
            dhc[i] = dh[i] * z[i];
            daz[i] = dz[i] * z[i] * (1.0 - z[i]);
            dah[i] = dhc[i] * (1.0 - hc[i] * hc[i]);
            carry[i] = dh[i] * (1.0 - z[i]); // direct h_{t-1} path
            rh[i] = r[i] * hprev[i];
        }
        // candidate branch: a_h = W_h x + U_h (r*h_prev) + b_h
        for (std::size_t i = 0; i < H; ++i) drh[i] = 0.0;
        matTvec_acc(uh_, dah.data(), drh.data());
        for (std::size_t i = 0; i < H; ++i) {
            dr[i] = drh[i] * hprev[i];
            carry[i] += drh[i] * r[i];
            dar[i] = dr[i] * r[i] * (1.0 - r[i]);
        }
        matTvec_acc(uz_, daz.data(), carry.data());
        matTvec_acc(ur_, dar.data(), carry.data());

        const double* xt = x_cache_.row_ptr(ti);
        outer_acc(gwz_, daz.data(), xt);
        outer_acc(gwr_, dar.data(), xt);
        outer_acc(gwh_, dah.data(), xt);
        outer_acc(guz_, daz.data(), hprev.data());
        outer_acc(gur_, dar.data(), hprev.data());
        outer_acc(guh_, dah.data(), rh.data());
        for (std::size_t i = 0; i < H; ++i) {
            gbz_[i] += daz[i];
            gbr_[i] += dar[i];
            gbh_[i] += dah[i];
        }
        double* gxr = gx.row_ptr(ti);
        matTvec_acc(wz_, daz.data(), gxr);
        matTvec_acc(wr_, dar.data(), gxr);
        matTvec_acc(wh_, dah.data(), gxr);
    }
    has_cache_ = false;
    return gx;
}

std::vector<ParamRef> Gru::params() {
    return {{name(), "W_z", &wz_, &gwz_, true}, {name(), "W_r", &wr_, &gwr_, true},
            {name(), "W_h", &wh_, &gwh_, true}, {name(), "U_z", &uz_, &guz_, true},
            {name(), "U_r", &ur_, &gur_, true}, {name(), "U_h", &uh_, &guh_, true},
            {name(), "b_z", &bz_, &gbz_, true}, {name(), "b_r", &br_, &gbr_, true},
            {name(), "b_h", &bh_, &gbh_, true}};
}

std::size_t Gru::output_dim(std::size_t) const { return hidden_; }

std::string Gru::descriptor() const {
    std::ostringstream os;
    os << "gru in=" << d_in_ << " hidden=" << hidden_ << " dropout=" << dropout_rate_;
    return os.str();
}

// ---------------------------------------------------------------------------
// BnUnit / BatchNorm

BnUnit::BnUnit(std::size_t c)
    : channels(c),
      gamma({c}),
      beta({c}),
      ggamma({c}),
      gbeta({c}),
      running_mean({c}),
      running_var({c}),
      trained_flag({std::size_t{1}}),
      inv_std_cache({c}) {
    gamma.fill(1.0);
    running_var.fill(1.0);
}

Tensor BnUnit::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.cols() != channels)
        throw std::invalid_argument("batch norm expected [T x " + std::to_string(channels) +
                                    "] input, got " + x.shape_str());
    const std::size_t T = x.rows();
    Tensor y({T, channels});
    xhat_cache = Tensor({T, channels});
    cached_mode = mode;
    if (mode == Mode::kTrain) {
        if (T == 0) throw std::invalid_argument("batch norm cannot train on an empty sequence");
        for (std::size_t c = 0; c < channels; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t < T; ++t) mean += x.at(t, c);
            mean /= static_cast<double>(T);
            double var = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double d = x.at(t, c) - mean;
                var += d * d;
            }
            var /= static_cast<double>(T);
            const double inv = 1.0 / std::sqrt(var + epsilon);
            inv_std_cache[c] = inv;
            for (std::size_t t = 0; t < T; ++t) {
                const double xh = (x.at(t, c) - mean) * inv;
                xhat_cache.at(t, c) = xh;
                y.at(t, c) = gamma[c] * xh + beta[c];
            }
            running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean;
            running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var;
        }
        trained_flag[0] = 1.0;
    } else {
        if (trained_flag[0] == 0.0)
            throw std::logic_error(
                "batch norm inference requested before any training statistics exist");
        for (std::size_t c = 0; c < channels; ++c) {
            const double inv = 1.0 / std::sqrt(running_var[c] + epsilon);
            inv_std_cache[c] = inv;
            for (std::size_t t = 0; t < T; ++t) {
                const double xh = (x.at(t, c) - running_mean[c]) * inv;
                xhat_cache.at(t, c) = xh;
                y.at(t, c) = gamma[c] * xh + beta[c];
            }
        }
    }
    has_cache = true;
    return y;
}

Tensor BnUnit::backward(const Tensor& grad_out) {
    if (!has_cache) throw std::logic_error("batch norm backward without a preceding forward");
    if (grad_out.rank() != 2 || grad_out.cols() != channels ||
        grad_out.rows() != xhat_cache.rows())
        throw std::invalid_argument("batch norm upstream gradient shape mismatch");
    const std::size_t T = grad_out.rows();
    Tensor gx({T, channels});
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double g = grad_out.at(t, c);
            sum_g += g;
            sum_gx += g * xhat_cache.at(t, c);
        }
        ggamma[c] += sum_gx;
        gbeta[c] += sum_g;
        const double inv = inv_std_cache[c];
        if (cached_mode == Mode::kTrain) {
            const double n = static_cast<double>(T);
            for (std::size_t t = 0; t < T; ++t) {
                const double g = grad_out.at(t, c);
                gx.at(t, c) =
                    gamma[c] * inv / n * (n * g - sum_g - xhat_cache.at(t, c) * sum_gx);
            }
        } else {
            for (std::size_t t = 0; t < T; ++t)
                gx.at(t, c) = grad_out.at(t, c) * gamma[c] * inv;
        }
    }
    has_cache = false;
    return gx;
}

BatchNorm::BatchNorm(std::string name, std::size_t channels)
    : Layer(std::move(name)), bn_(channels) {
    if (channels == 0) throw std::invalid_argument("batch norm needs at least one channel");
}

Tensor BatchNorm::forward(const Tensor& x, const RunContext& ctx) {
    Tensor y = bn_.forward(x, ctx.mode);
    has_cache_ = true;
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    require_cache("backward");
    has_cache_ = false;
    return bn_.backward(grad_out);
}

std::vector<ParamRef> BatchNorm::params() {
    return {{name(), "gamma", &bn_.gamma, &bn_.ggamma, true},
            {name(), "beta", &bn_.beta, &bn_.gbeta, true}};
}

std::vector<StateRef> BatchNorm::state() {
    return {{name(), "running_mean", &bn_.running_mean},
            {name(), "running_var", &bn_.running_var},
            {name(), "trained", &bn_.trained_flag}};
}

std::size_t BatchNorm::output_dim(std::size_t input_dim) const { return input_dim; }

std::string BatchNorm::descriptor() const {
    return "batchnorm channels=" + std::to_string(bn_.channels);
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout rate must lie in [0, 1), got " +
                                    std::to_string(rate));
}

Tensor Dropout::forward(const Tensor& x, const RunContext& ctx) {
    Tensor y = x;
    mask_active_ = false;
    if (rate_ > 0.0 && ctx.mode == Mode::kTrain) {
        if (ctx.rng == nullptr)
            throw std::logic_error(name() + ": train-mode forward needs an rng");
        mask_cache_ = Tensor(x.shape());
        const double keep = 1.0 - rate_;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double m = ctx.rng->uniform() < rate_ ? 0.0 : 1.0 / keep;
            mask_cache_[i] = m;
            y[i] *= m;
        }
        mask_active_ = true;
    }
    has_cache_ = true;
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    require_cache("backward");
    has_cache_ = false;
    if (!mask_active_) return grad_out;
    if (!grad_out.same_shape(mask_cache_))
        throw std::invalid_argument(name() + ": upstream gradient shape mismatch");
    Tensor gx = grad_out;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask_cache_[i];
    return gx;
}

std::size_t Dropout::output_dim(std::size_t input_dim) const { return input_dim; }

std::string Dropout::descriptor() const {
    std::ostringstream os;
    os << "dropout rate=" << rate_;
    return os.str();
}

// ---------------------------------------------------------------------------
// TcnBlock

TcnBlock::TcnBlock(std::string name, std::size_t c_in, std::size_t c_out, Rng* rng,
                   std::vector<std::size_t> dilations, bool batchnorm, double dropout)
    : Layer(std::move(name)),
      c_in_(c_in),
      c_out_(c_out),
      batchnorm_(batchnorm),
      dropout_rate_(dropout),
      has_projection_(c_in != c_out) {
    if (c_in == 0 || c_out == 0)
        throw std::invalid_argument("tcn block channel counts must be positive");
    if (dilations.empty())
        throw std::invalid_argument("tcn block needs at least one dilation");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("tcn dropout rate must lie in [0, 1), got " +
                                    std::to_string(dropout));
    for (std::size_t i = 0; i < dilations.size(); ++i) {
        if (dilations[i] == 0) throw std::invalid_argument("tcn dilation must be >= 1");
        Conv conv;
        conv.dilation = dilations[i];
        const std::size_t ci = (i == 0) ? c_in : c_out;
        // Glorot over the full width-2 kernel.
        const double limit = glorot_limit(2 * ci, 2 * c_out);
        conv.past = glorot_matrix(c_out, ci, limit, rng);
        conv.present = glorot_matrix(c_out, ci, limit, rng);
        conv.bias = Tensor({c_out});
        conv.gpast = Tensor({c_out, ci});
        conv.gpresent = Tensor({c_out, ci});
        conv.gbias = Tensor({c_out});
        convs_.push_back(std::move(conv));
        if (batchnorm_) bns_.emplace_back(c_out);
    }
    if (has_projection_) {
        proj_ = glorot_matrix(c_out, c_in, glorot_limit(c_in, c_out), rng);
        gproj_ = Tensor({c_out, c_in});
    }
}

Tensor TcnBlock::forward(const Tensor& x, const RunContext& ctx) {
    check_input(x, c_in_, name());
    const std::size_t T = x.rows();
    x_cache_ = x;
    Tensor cur = x;
    for (std::size_t ci = 0; ci < convs_.size(); ++ci) {
        Conv& conv = convs_[ci];
        conv.in_cache = cur;
        const std::size_t d = conv.dilation;
        Tensor next({T, c_out_});
        for (std::size_t t = 0; t < T; ++t) {
            double* out = next.row_ptr(t);
            for (std::size_t i = 0; i < c_out_; ++i) out[i] = conv.bias[i];
            matvec_acc(conv.present, cur.row_ptr(t), out);
            if (t >= d) matvec_acc(conv.past, cur.row_ptr(t - d), out);
        }
        if (batchnorm_) next = bns_[ci].forward(next, ctx.mode);
        conv.mask_active_ = false;
        if (dropout_rate_ > 0.0 && ctx.mode == Mode::kTrain) {
            if (ctx.rng == nullptr)
                throw std::logic_error(name() + ": train-mode forward with dropout needs an rng");
            conv.mask_cache = Tensor({T, c_out_});
            const double keep = 1.0 - dropout_rate_;
            for (std::size_t i = 0; i < T * c_out_; ++i) {
                const double m = ctx.rng->uniform() < dropout_rate_ ? 0.0 : 1.0 / keep;
                conv.mask_cache[i] = m;
                next[i] *= m;
            }
            conv.mask_active_ = true;
        }
        cur = std::move(next);
    }
    // Residual connection.
    if (has_projection_) {
        for (std::size_t t = 0; t < T; ++t) matvec_acc(proj_, x.row_ptr(t), cur.row_ptr(t));
    } else {
        for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += x[i];
    }
    has_cache_ = true;
    return cur;
}

Tensor TcnBlock::backward(const Tensor& grad_out) {
    require_cache("backward");
    check_input(grad_out, c_out_, name() + " (upstream gradient)");
    const std::size_t T = x_cache_.rows();
    if (grad_out.rows() != T)
        throw std::invalid_argument(name() + ": upstream gradient has " +
                                    std::to_string(grad_out.rows()) + " rows, forward saw " +
                                    std::to_string(T));
    Tensor gx({T, c_in_});
    // Residual path first.
    if (has_projection_) {
        for (std::size_t t = 0; t < T; ++t) {
            outer_acc(gproj_, grad_out.row_ptr(t), x_cache_.row_ptr(t));
            matTvec_acc(proj_, grad_out.row_ptr(t), gx.row_ptr(t));
        }
    } else {
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = grad_out[i];
    }
    // Convolutional path, last conv first.
    Tensor g = grad_out;
    for (std::size_t ci = convs_.size(); ci-- > 0;) {
        Conv& conv = convs_[ci];
        if (conv.mask_active_) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= conv.mask_cache[i];
        }
        if (batchnorm_) g = bns_[ci].backward(g);
        const std::size_t d = conv.dilation;
        const std::size_t cin = conv.in_cache.cols();
        Tensor gin({T, cin});
        for (std::size_t t = 0; t < T; ++t) {
            const double* gt = g.row_ptr(t);
            outer_acc(conv.gpresent, gt, conv.in_cache.row_ptr(t));
            if (t >= d) outer_acc(conv.gpast, gt, conv.in_cache.row_ptr(t - d));
            for (std::size_t i = 0; i < c_out_; ++i) conv.gbias[i] += gt[i];
            matTvec_acc(conv.present, gt, gin.row_ptr(t));
            if (t >= d) matTvec_acc(conv.past, gt, gin.row_ptr(t - d));
        }
        g = std::move(gin);
    }
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    has_cache_ = false;
    return gx;
}

std::vector<ParamRef> TcnBlock::params() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "conv" + std::to_string(i + 1);
        out.push_back({name(), p + ".past", &convs_[i].past, &convs_[i].gpast, true});
        out.push_back({name(), p + ".present", &convs_[i].present, &convs_[i].gpresent, true});
        out.push_back({name(), p + ".bias", &convs_[i].bias, &convs_[i].gbias, true});
        if (batchnorm_) {
            out.push_back({name(), p + ".bn_gamma", &bns_[i].gamma, &bns_[i].ggamma, true});
            out.push_back({name(), p + ".bn_beta", &bns_[i].beta, &bns_[i].gbeta, true});
        }
    }
    if (has_projection_) out.push_back({name(), "proj", &proj_, &gproj_, true});
    return out;
}

std::vector<StateRef> TcnBlock::state() {
    std::vector<StateRef> out;
    if (batchnorm_) {
        for (std::size_t i = 0; i < bns_.size(); ++i) {
            const std::string p = "conv" + std::to_string(i + 1);
            out.push_back({name(), p + ".bn_running_mean", &bns_[i].running_mean});
            out.push_back({name(), p + ".bn_running_var", &bns_[i].running_var});
            out.push_back({name(), p + ".bn_trained", &bns_[i].trained_flag});
        }
    }
    return out;
}

std::size_t TcnBlock::output_dim(std::size_t) const { return c_out_; }

std::string TcnBlock::descriptor() const {
    std::ostringstream os;
    os << "tcn in=" << c_in_ << " out=" << c_out_ << " dilations=";
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        if (i) os << ',';
        os << convs_[i].dilation;
    }
    os << " batchnorm=" << (batchnorm_ ? 1 : 0) << " dropout=" << dropout_rate_;
    return os.str();
}

// ---------------------------------------------------------------------------
// Softmax

Softmax::Softmax(std::string name) : Layer(std::move(name)) {}

Tensor Softmax::forward(const Tensor& x, const RunContext&) {
    if (x.rank() != 2)
        throw std::invalid_argument(name() + ": expected a [T x V] input, got rank " +
                                    std::to_string(x.rank()));
    const std::size_t T = x.rows(), V = x.cols();
    Tensor y({T, V});
    for (std::size_t t = 0; t < T; ++t) {
        const double* in = x.row_ptr(t);
        double* out = y.row_ptr(t);
        double mx = in[0];
        for (std::size_t k = 1; k < V; ++k) mx = std::max(mx, in[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < V; ++k) {
            out[k] = std::exp(in[k] - mx);
            sum += out[k];
        }
        for (std::size_t k = 0; k < V; ++k) out[k] /= sum;
    }
    y_cache_ = y;
    has_cache_ = true;
    return y;
}

Tensor Softmax::backward(const Tensor& grad_out) {
    require_cache("backward");
    if (!grad_out.same_shape(y_cache_))
        throw std::invalid_argument(name() + ": upstream gradient shape mismatch");
    const std::size_t T = y_cache_.rows(), V = y_cache_.cols();
    Tensor gx({T, V});
    for (std::size_t t = 0; t < T; ++t) {
        const double* y = y_cache_.row_ptr(t);
        const double* g = grad_out.row_ptr(t);
        double dot = 0.0;
        for (std::size_t k = 0; k < V; ++k) dot += g[k] * y[k];
        double* out = gx.row_ptr(t);
        for (std::size_t k = 0; k < V; ++k) out[k] = y[k] * (g[k] - dot);
    }
    has_cache_ = false;
    return gx;
}

std::size_t Softmax::output_dim(std::size_t input_dim) const { return input_dim; }

std::string Softmax::descriptor() const { return "softmax"; }

// ---------------------------------------------------------------------------
// MSE

MseResult mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse_loss shape mismatch: " + pred.shape_str() + " vs " +
                                    target.shape_str());
    if (pred.size() == 0) throw std::invalid_argument("mse_loss on empty tensors is undefined");
    MseResult res;
    res.grad = Tensor(pred.shape());
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
        res.grad[i] = 2.0 * d / n;
    }
    res.loss = acc / n;
    return res;
}

} // namespace eegcsr::nn
