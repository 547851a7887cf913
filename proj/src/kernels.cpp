#include "procplan/kernels.hpp"

#include <cassert>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace procplan::kernels {

namespace {

inline void check_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
    assert(in.cols() == weights.cols());
    assert(bias.size() == weights.rows());
    if (out.rows() != in.rows() || out.cols() != weights.rows()) out = Matrix(in.rows(), weights.rows());
    (void)bias;
}

inline void forward_row(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out,
                        std::size_t b) {
    const std::size_t n_in = in.cols();
    const double* x = in.row(b).data();
    double* y = out.row(b).data();
    for (std::size_t o = 0; o < weights.rows(); ++o) {
        const double* w = weights.row(o).data();
        double acc = bias[o];
        for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * x[i];
        y[o] = acc;
    }
}

inline void params_row(const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                       std::span<double> grad_bias, std::size_t o) {
    const std::size_t batch = in.rows();
    const std::size_t n_in = in.cols();
    double* gw = grad_weights.row(o).data();
    for (std::size_t i = 0; i < n_in; ++i) gw[i] = 0.0;
    double gb = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double g = grad_out(b, o);
        gb += g;
        const double* x = in.row(b).data();
        for (std::size_t i = 0; i < n_in; ++i) gw[i] += g * x[i];
    }
    grad_bias[o] = gb;
}

inline void input_row(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in, std::size_t b) {
    const std::size_t n_in = weights.cols();
    double* gx = grad_in.row(b).data();
    for (std::size_t i = 0; i < n_in; ++i) gx[i] = 0.0;
    for (std::size_t o = 0; o < weights.rows(); ++o) {
        const double g = grad_out(b, o);
        const double* w = weights.row(o).data();
        for (std::size_t i = 0; i < n_in; ++i) gx[i] += g * w[i];
    }
}

}  // namespace

namespace serial {

void dense_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
    check_forward(in, weights, bias, out);
    for (std::size_t b = 0; b < in.rows(); ++b) forward_row(in, weights, bias, out, b);
}

void dense_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                           std::span<double> grad_bias) {
    if (grad_weights.rows() != grad_out.cols() || grad_weights.cols() != in.cols())
        grad_weights = Matrix(grad_out.cols(), in.cols());
    for (std::size_t o = 0; o < grad_out.cols(); ++o) params_row(grad_out, in, grad_weights, grad_bias, o);
}

void dense_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in) {
    if (grad_in.rows() != grad_out.rows() || grad_in.cols() != weights.cols())
        grad_in = Matrix(grad_out.rows(), weights.cols());
    for (std::size_t b = 0; b < grad_out.rows(); ++b) input_row(grad_out, weights, grad_in, b);
}

}  // namespace serial

namespace parallel {

void dense_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
    check_forward(in, weights, bias, out);
    const auto rows = static_cast<std::ptrdiff_t>(in.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < rows; ++b) forward_row(in, weights, bias, out, static_cast<std::size_t>(b));
}

void dense_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                           std::span<double> grad_bias) {
    if (grad_weights.rows() != grad_out.cols() || grad_weights.cols() != in.cols())
        grad_weights = Matrix(grad_out.cols(), in.cols());
    const auto outs = static_cast<std::ptrdiff_t>(grad_out.cols());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < outs; ++o)
        params_row(grad_out, in, grad_weights, grad_bias, static_cast<std::size_t>(o));
}

void dense_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in) {
    if (grad_in.rows() != grad_out.rows() || grad_in.cols() != weights.cols())
        grad_in = Matrix(grad_out.rows(), weights.cols());
    const auto rows = static_cast<std::ptrdiff_t>(grad_out.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < rows; ++b) input_row(grad_out, weights, grad_in, static_cast<std::size_t>(b));
}

}  // namespace parallel

void dense_forward(Backend backend, const Matrix& in, const Matrix& weights, std::span<const double> bias,
                   Matrix& out) {
    if (backend == Backend::parallel)
        parallel::dense_forward(in, weights, bias, out);
    else
        serial::dense_forward(in, weights, bias, out);
}

void dense_backward_params(Backend backend, const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                           std::span<double> grad_bias) {
    if (backend == Backend::parallel)
        parallel::dense_backward_params(grad_out, in, grad_weights, grad_bias);
    else
        serial::dense_backward_params(grad_out, in, grad_weights, grad_bias);
}

void dense_backward_input(Backend backend, const Matrix& grad_out, const Matrix& weights, Matrix& grad_in) {
    if (backend == Backend::parallel)
        parallel::dense_backward_input(grad_out, weights, grad_in);
    else
        serial::dense_backward_input(grad_out, weights, grad_in);
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace procplan::kernels
