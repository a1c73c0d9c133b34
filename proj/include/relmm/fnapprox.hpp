#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "relmm/errors.hpp"
#include "relmm/rng.hpp"
#include "relmm/tensor.hpp"

// Small differentiable network core: dense and convolutional stacks with an
// adaptive-moment optimizer. Templated on the scalar type so the gradient
// tests can instantiate the exact same code in double precision.
namespace relmm::fn {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowX = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerSpec {
    enum class Kind { conv, relu, avgpool, dense, append_aux };
    Kind kind = Kind::dense;
    int units = 0;  // conv out-channels / dense width
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    static LayerSpec conv(int ch, int k = 3, int s = 1, int p = 1) {
        return {Kind::conv, ch, k, s, p};
    }
    static LayerSpec relu() { return {Kind::relu}; }
    static LayerSpec avgpool(int k = 2) { return {Kind::avgpool, 0, k}; }
    static LayerSpec dense(int n) { return {Kind::dense, n}; }
    static LayerSpec append_aux() { return {Kind::append_aux}; }
};

template <typename T>
struct Param {
    std::string name;
    MatX<T> value;
    MatX<T> grad;
};

namespace detail {

template <typename T>
struct LayerState {
    LayerSpec spec;
    // resolved geometry
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    long in_dim = 0, out_dim = 0;
    // parameters (conv: W [C*K*K, OC]; dense: W [in, out]; bias [1, out])
    Param<T> weight, bias;
    bool has_params() const {
        return spec.kind == LayerSpec::Kind::conv || spec.kind == LayerSpec::Kind::dense;
    }
};

// Per-layer forward caches; a Network owns one set for training, while the
// const inference path allocates its own locally.
template <typename T>
struct LayerCache {
    MatX<T> kept;  // conv: im2col matrix; dense: input; relu: output
};

}  // namespace detail

template <typename T>
class Network {
public:
    // input_shape: {C,H,W} for image inputs or {D} for flat inputs.
    // aux_dim: width of the auxiliary vector consumed by append_aux (0 if unused).
    Network(std::vector<LayerSpec> specs, std::vector<int> input_shape, int aux_dim, RngStream& init_rng,
            std::string name = "net")
        : name_(std::move(name)), input_shape_(std::move(input_shape)), aux_dim_(aux_dim) {
        build(std::move(specs), init_rng);
    }

    const std::string& name() const { return name_; }
    long in_dim() const { return in_dim_; }
    long out_dim() const { return layers_.empty() ? in_dim_ : layers_.back().out_dim; }
    int aux_dim() const { return aux_dim_; }
    const std::vector<int>& input_shape() const { return input_shape_; }

    // Declared output shape for a given input shape (shape algebra only).
    static std::vector<int> infer_out_shape(const std::vector<LayerSpec>& specs, std::vector<int> shape,
                                            int aux_dim);

    // Training-path forward: caches activations for backward.
    const MatX<T>& forward(const MatX<T>& x, const MatX<T>* aux = nullptr) {
        run_forward(x, aux, caches_, acts_);
        forward_done_ = true;
        return acts_.back();
    }

    // Stateless forward for inference; safe to call concurrently on a const net.
    MatX<T> infer(const MatX<T>& x, const MatX<T>* aux = nullptr) const {
        std::vector<detail::LayerCache<T>> caches;
        std::vector<MatX<T>> acts;
        const_cast<Network*>(this)->run_forward(x, aux, caches, acts);
        return acts.back();
    }

    // dy: [B, out_dim] gradient of the loss w.r.t. the network output.
    // Overwrites parameter gradients; optionally reports input/aux gradients.
    void backward(const MatX<T>& dy, MatX<T>* dx_out = nullptr, MatX<T>* daux_out = nullptr);

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& l : layers_)
            if (l.has_params()) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        return out;
    }
    std::vector<const Param<T>*> params() const {
        std::vector<const Param<T>*> out;
        for (const auto& l : layers_)
            if (l.has_params()) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        return out;
    }

    long param_count() const {
        long n = 0;
        for (const auto* p : params()) n += p->value.size();
        return n;
    }

    void copy_params_from(const Network& o) {
        auto mine = params();
        auto theirs = o.params();
        if (mine.size() != theirs.size()) throw std::logic_error("copy_params_from: topology mismatch");
        for (size_t i = 0; i < mine.size(); ++i) mine[i]->value = theirs[i]->value;
    }

private:
    void build(std::vector<LayerSpec> specs, RngStream& rng);
    void run_forward(const MatX<T>& x, const MatX<T>* aux, std::vector<detail::LayerCache<T>>& caches,
                     std::vector<MatX<T>>& acts);

    std::string name_;
    std::vector<int> input_shape_;
    int aux_dim_ = 0;
    long in_dim_ = 0;
    std::vector<detail::LayerState<T>> layers_;
    // training-path state
    std::vector<detail::LayerCache<T>> caches_;
    std::vector<MatX<T>> acts_;
    MatX<T> aux_cache_;
    bool aux_used_ = false;
    bool forward_done_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
std::vector<int> Network<T>::infer_out_shape(const std::vector<LayerSpec>& specs, std::vector<int> shape,
                                             int aux_dim) {
    auto flat = [](const std::vector<int>& s) {
        long n = 1;
        for (int d : s) n *= d;
        return static_cast<int>(n);
    };
    for (const LayerSpec& sp : specs) {
        switch (sp.kind) {
            case LayerSpec::Kind::conv: {
                if (shape.size() != 3) throw std::invalid_argument("conv requires a CxHxW input");
                const int h = (shape[1] + 2 * sp.pad - sp.kernel) / sp.stride + 1;
                const int w = (shape[2] + 2 * sp.pad - sp.kernel) / sp.stride + 1;
                if (h <= 0 || w <= 0) throw std::invalid_argument("conv output collapsed to zero");
                shape = {sp.units, h, w};
                break;
            }
            case LayerSpec::Kind::avgpool: {
                if (shape.size() != 3) throw std::invalid_argument("avgpool requires a CxHxW input");
                if (shape[1] % sp.kernel || shape[2] % sp.kernel)
                    throw std::invalid_argument("avgpool input not divisible by kernel");
                shape = {shape[0], shape[1] / sp.kernel, shape[2] / sp.kernel};
                break;
            }
            case LayerSpec::Kind::relu:
                break;
            case LayerSpec::Kind::dense:
                shape = {sp.units};
                break;
            case LayerSpec::Kind::append_aux:
                if (aux_dim <= 0) throw std::invalid_argument("append_aux without aux input");
                shape = {flat(shape) + aux_dim};
                break;
        }
    }
    return shape;
}

template <typename T>
void Network<T>::build(std::vector<LayerSpec> specs, RngStream& rng) {
    if (input_shape_.size() != 1 && input_shape_.size() != 3)
        throw std::invalid_argument("input shape must be {D} or {C,H,W}");
    in_dim_ = 1;
    for (int d : input_shape_) in_dim_ *= d;

    std::vector<int> shape = input_shape_;
    int idx = 0;
    for (LayerSpec& sp : specs) {
        detail::LayerState<T> st;
        st.spec = sp;
        if (shape.size() == 3) {
            st.in_c = shape[0];
            st.in_h = shape[1];
            st.in_w = shape[2];
        }
        st.in_dim = TensorT<T>::numel_of(shape);
        shape = infer_out_shape({sp}, shape, aux_dim_);
        if (shape.size() == 3) {
            st.out_c = shape[0];
            st.out_h = shape[1];
            st.out_w = shape[2];
        }
        st.out_dim = TensorT<T>::numel_of(shape);

        auto init_uniform = [&](MatX<T>& m, long rows, long cols, double bound) {
            m.resize(rows, cols);
            for (long r = 0; r < rows; ++r)
                for (long c = 0; c < cols; ++c) m(r, c) = static_cast<T>(rng.uniform(-bound, bound));
        };
        const std::string base = name_ + ".l" + std::to_string(idx);
        if (sp.kind == LayerSpec::Kind::conv) {
            const long fan_in = static_cast<long>(st.in_c) * sp.kernel * sp.kernel;
            init_uniform(st.weight.value, fan_in, sp.units, 1.0 / std::sqrt(static_cast<double>(fan_in)));
            st.weight.name = base + ".W";
            st.bias.value = MatX<T>::Zero(1, sp.units);
            st.bias.name = base + ".b";
        } else if (sp.kind == LayerSpec::Kind::dense) {
            const long fan_in = st.in_dim;
            init_uniform(st.weight.value, fan_in, sp.units, 1.0 / std::sqrt(static_cast<double>(fan_in)));
            st.weight.name = base + ".W";
            st.bias.value = MatX<T>::Zero(1, sp.units);
            st.bias.name = base + ".b";
        }
        layers_.push_back(std::move(st));
        ++idx;
    }
}

namespace detail {

// im2col: x [B, C*H*W] -> col [B*OH*OW, C*K*K]
template <typename T>
void im2col(const MatX<T>& x, const LayerState<T>& st, MatX<T>& col) {
    const int B = static_cast<int>(x.rows());
    const auto& sp = st.spec;
    const int C = st.in_c, H = st.in_h, W = st.in_w, OH = st.out_h, OW = st.out_w;
    col.setZero(static_cast<long>(B) * OH * OW, static_cast<long>(C) * sp.kernel * sp.kernel);
    for (int b = 0; b < B; ++b) {
        const T* xb = x.data() + static_cast<size_t>(b) * x.cols();
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                T* row = col.data() + (static_cast<size_t>(b) * OH * OW + static_cast<size_t>(oy) * OW + ox) *
                                          col.cols();
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < sp.kernel; ++ky) {
                        const int iy = oy * sp.stride - sp.pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const T* src = xb + (static_cast<size_t>(c) * H + iy) * W;
                        T* dst = row + (static_cast<size_t>(c) * sp.kernel + ky) * sp.kernel;
                        for (int kx = 0; kx < sp.kernel; ++kx) {
                            const int ix = ox * sp.stride - sp.pad + kx;
                            if (ix >= 0 && ix < W) dst[kx] = src[ix];
                        }
                    }
                }
            }
        }
    }
}

// col2im scatter-add: dcol [B*OH*OW, C*K*K] -> dx [B, C*H*W]
template <typename T>
void col2im(const MatX<T>& dcol, const LayerState<T>& st, MatX<T>& dx) {
    const auto& sp = st.spec;
    const int C = st.in_c, H = st.in_h, W = st.in_w, OH = st.out_h, OW = st.out_w;
    const int B = static_cast<int>(dcol.rows() / (static_cast<long>(OH) * OW));
    dx.setZero(B, static_cast<long>(C) * H * W);
    for (int b = 0; b < B; ++b) {
        T* xb = dx.data() + static_cast<size_t>(b) * dx.cols();
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                const T* row = dcol.data() +
                               (static_cast<size_t>(b) * OH * OW + static_cast<size_t>(oy) * OW + ox) * dcol.cols();
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < sp.kernel; ++ky) {
                        const int iy = oy * sp.stride - sp.pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        T* dst = xb + (static_cast<size_t>(c) * H + iy) * W;
                        const T* src = row + (static_cast<size_t>(c) * sp.kernel + ky) * sp.kernel;
                        for (int kx = 0; kx < sp.kernel; ++kx) {
                            const int ix = ox * sp.stride - sp.pad + kx;
                            if (ix >= 0 && ix < W) dst[ix] += src[kx];
                        }
                    }
                }
            }
        }
    }
}

// [B*OH*OW, OC] <-> [B, OC*OH*OW]
template <typename T>
void gather_channels(const MatX<T>& y_rs, int B, int OC, int OHW, MatX<T>& y) {
    y.resize(B, static_cast<long>(OC) * OHW);
    for (int b = 0; b < B; ++b)
        for (int p = 0; p < OHW; ++p)
            for (int c = 0; c < OC; ++c)
                y(b, static_cast<long>(c) * OHW + p) = y_rs(static_cast<long>(b) * OHW + p, c);
}

template <typename T>
void scatter_channels(const MatX<T>& y, int B, int OC, int OHW, MatX<T>& y_rs) {
    y_rs.resize(static_cast<long>(B) * OHW, OC);
    for (int b = 0; b < B; ++b)
        for (int p = 0; p < OHW; ++p)
            for (int c = 0; c < OC; ++c)
                y_rs(static_cast<long>(b) * OHW + p, c) = y(b, static_cast<long>(c) * OHW + p);
}

}  // namespace detail

template <typename T>
void Network<T>::run_forward(const MatX<T>& x, const MatX<T>* aux, std::vector<detail::LayerCache<T>>& caches,
                             std::vector<MatX<T>>& acts) {
    if (x.cols() != in_dim_)
        throw std::invalid_argument(name_ + ": input width " + std::to_string(x.cols()) +
                                    " does not match declared " + std::to_string(in_dim_));
    caches.resize(layers_.size());
    acts.clear();
    acts.reserve(layers_.size() + 1);
    acts.push_back(x);
    const int B = static_cast<int>(x.rows());
    for (size_t li = 0; li < layers_.size(); ++li) {
        auto& st = layers_[li];
        const MatX<T>& in = acts.back();
        MatX<T> out;
        switch (st.spec.kind) {
            case LayerSpec::Kind::conv: {
                detail::im2col(in, st, caches[li].kept);
                MatX<T> y_rs = caches[li].kept * st.weight.value;
                y_rs.rowwise() += st.bias.value.row(0);
                detail::gather_channels(y_rs, B, st.out_c, st.out_h * st.out_w, out);
                break;
            }
            case LayerSpec::Kind::dense: {
                caches[li].kept = in;
                out = in * st.weight.value;
                out.rowwise() += st.bias.value.row(0);
                break;
            }
            case LayerSpec::Kind::relu: {
                out = in.cwiseMax(T(0));
                caches[li].kept = out;
                break;
            }
            case LayerSpec::Kind::avgpool: {
                const int k = st.spec.kernel, C = st.in_c, H = st.in_h, W = st.in_w;
                const int OH = st.out_h, OW = st.out_w;
                out.setZero(B, st.out_dim);
                const T inv = T(1) / static_cast<T>(k * k);
                for (int b = 0; b < B; ++b) {
                    const T* src = in.data() + static_cast<size_t>(b) * in.cols();
                    T* dst = out.data() + static_cast<size_t>(b) * out.cols();
                    for (int c = 0; c < C; ++c)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                T acc = 0;
                                for (int ky = 0; ky < k; ++ky)
                                    for (int kx = 0; kx < k; ++kx)
                                        acc += src[(static_cast<size_t>(c) * H + oy * k + ky) * W + ox * k + kx];
                                dst[(static_cast<size_t>(c) * OH + oy) * OW + ox] = acc * inv;
                            }
                }
                break;
            }
            case LayerSpec::Kind::append_aux: {
                if (!aux) throw std::invalid_argument(name_ + ": aux input required");
                if (aux->rows() != B || aux->cols() != aux_dim_)
                    throw std::invalid_argument(name_ + ": aux shape mismatch");
                out.resize(B, in.cols() + aux_dim_);
                out.leftCols(in.cols()) = in;
                out.rightCols(aux_dim_) = *aux;
                if (&caches == &caches_) {
                    aux_cache_ = *aux;
                    aux_used_ = true;
                }
                break;
            }
        }
        acts.push_back(std::move(out));
    }
}

template <typename T>
void Network<T>::backward(const MatX<T>& dy, MatX<T>* dx_out, MatX<T>* daux_out) {
    if (!forward_done_) throw std::logic_error(name_ + ": backward without forward");
    if (dy.rows() != acts_.back().rows() || dy.cols() != acts_.back().cols())
        throw std::invalid_argument(name_ + ": output-gradient shape mismatch");
    MatX<T> grad = dy;
    const int B = static_cast<int>(dy.rows());
    for (size_t li = layers_.size(); li-- > 0;) {
        auto& st = layers_[li];
        MatX<T> next;
        switch (st.spec.kind) {
            case LayerSpec::Kind::conv: {
                MatX<T> dy_rs;
                detail::scatter_channels(grad, B, st.out_c, st.out_h * st.out_w, dy_rs);
                st.weight.grad.noalias() = caches_[li].kept.transpose() * dy_rs;
                st.bias.grad = dy_rs.colwise().sum();
                MatX<T> dcol = dy_rs * st.weight.value.transpose();
                detail::col2im(dcol, st, next);
                break;
            }
            case LayerSpec::Kind::dense: {
                st.weight.grad.noalias() = caches_[li].kept.transpose() * grad;
                st.bias.grad = grad.colwise().sum();
                next.noalias() = grad * st.weight.value.transpose();
                break;
            }
            case LayerSpec::Kind::relu: {
                next = (caches_[li].kept.array() > T(0)).template cast<T>() * grad.array();
                break;
            }
            case LayerSpec::Kind::avgpool: {
                const int k = st.spec.kernel, C = st.in_c, H = st.in_h, W = st.in_w;
                const int OH = st.out_h, OW = st.out_w;
                next.setZero(B, st.in_dim);
                const T inv = T(1) / static_cast<T>(k * k);
                for (int b = 0; b < B; ++b) {
                    const T* src = grad.data() + static_cast<size_t>(b) * grad.cols();
                    T* dst = next.data() + static_cast<size_t>(b) * next.cols();
                    for (int c = 0; c < C; ++c)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const T g = src[(static_cast<size_t>(c) * OH + oy) * OW + ox] * inv;
                                for (int ky = 0; ky < k; ++ky)
                                    for (int kx = 0; kx < k; ++kx)
                                        dst[(static_cast<size_t>(c) * H + oy * k + ky) * W + ox * k + kx] += g;
                            }
                }
                break;
            }
            case LayerSpec::Kind::append_aux: {
                if (daux_out) *daux_out = grad.rightCols(aux_dim_);
                next = grad.leftCols(grad.cols() - aux_dim_);
                break;
            }
        }
        grad = std::move(next);
    }
    if (dx_out) *dx_out = std::move(grad);
}

// ---------------------------------------------------------------------------

// Adaptive-moment first-order optimizer.
template <typename T>
class Adam {
public:
    explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Param<T>*> params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
            }
        }
        if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const double alpha = lr_ * std::sqrt(bc2) / bc1;
        for (size_t i = 0; i < params.size(); ++i) {
            Param<T>& p = *params[i];
            if (p.grad.size() == 0) continue;  // parameter untouched this step
            if (!p.grad.allFinite()) throw TrainingError("non-finite gradient in " + p.name);
            m_[i] = static_cast<T>(beta1_) * m_[i] + static_cast<T>(1.0 - beta1_) * p.grad;
            v_[i].array() = static_cast<T>(beta2_) * v_[i].array() +
                            static_cast<T>(1.0 - beta2_) * p.grad.array().square();
            p.value.array() -= static_cast<T>(alpha) * m_[i].array() / (v_[i].array().sqrt() + static_cast<T>(eps_));
        }
    }

    long step_count() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    // checkpoint access
    std::vector<MatX<T>>& moments1() { return m_; }
    std::vector<MatX<T>>& moments2() { return v_; }
    void set_step_count(long t) { t_ = t; }
    void ensure_state(const std::vector<Param<T>*>& params) {
        if (m_.empty())
            for (auto* p : params) {
                m_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
            }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<MatX<T>> m_, v_;
};

// ---------------------------------------------------------------------------

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Stable softmax of arbitrary finite values.
template <typename Vec>
std::vector<double> softmax(const Vec& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    std::vector<double> p(v.size());
    double z = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(static_cast<double>(v[i]) - mx);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

}  // namespace relmm::fn
