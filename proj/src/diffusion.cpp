#include "procplan/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "procplan/error.hpp"

namespace procplan {

// ---- schedule ---------------------------------------------------------------

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw Error("invalid_schedule", "diffusion needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw Error("invalid_schedule", "need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(steps);
    s.alpha_bar.resize(steps);
    double running = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        s.beta[i] = beta_start + frac * (beta_end - beta_start);
        running *= 1.0 - s.beta[i];
        s.alpha_bar[i] = running;
    }
    return s;
}

Matrix forward_diffuse(const Matrix& x0, std::size_t n, const Matrix& eps, const NoiseSchedule& schedule) {
    if (n < 1 || n > schedule.steps()) throw Error("step_out_of_range", "diffusion step out of range");
    if (!x0.same_shape(eps)) throw Error("shape_mismatch", "noise shape differs from the grid");
    const double a = std::sqrt(schedule.alpha_bar_at(n));
    const double b = std::sqrt(1.0 - schedule.alpha_bar_at(n));
    Matrix out(x0.rows(), x0.cols());
    for (std::size_t i = 0; i < x0.size(); ++i) out.data()[i] = a * x0.data()[i] + eps.data()[i] * b;
    return out;
}

Matrix gaussian_like(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = normal(rng);
    return m;
}

// ---- layout -----------------------------------------------------------------

ConditionMatrix::ConditionMatrix(std::vector<RowKind> row_kinds, std::size_t columns)
    : values_(row_kinds.size(), columns), row_kinds_(std::move(row_kinds)) {
    roles_.resize(values_.size());
    for (std::size_t r = 0; r < rows(); ++r) {
        CellRole role = CellRole::action;
        if (row_kinds_[r] == RowKind::observation) role = CellRole::observation;
        if (row_kinds_[r] == RowKind::recommendation) role = CellRole::recommendation;
        for (std::size_t c = 0; c < columns; ++c) roles_[r * columns + c] = role;
    }
}

bool ConditionMatrix::same_layout(const ConditionMatrix& other) const {
    return values_.same_shape(other.values_) && row_kinds_ == other.row_kinds_ && roles_ == other.roles_;
}

void project_conditions_inplace(Matrix& x, const ConditionMatrix& templ) {
    if (!x.same_shape(templ.values())) throw Error("layout_mismatch", "grid does not match the template layout");
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            if (templ.is_condition(r, c)) x(r, c) = templ.values()(r, c);
}

Matrix project_conditions(const Matrix& x, const ConditionMatrix& templ) {
    Matrix out = x;
    project_conditions_inplace(out, templ);
    return out;
}

// ---- loss -------------------------------------------------------------------

LossWeights LossWeights::uniform(std::size_t horizon) {
    return {std::vector<double>(horizon, 1.0)};
}

LossWeights LossWeights::endpoints(std::size_t horizon, double endpoint_weight) {
    auto w = uniform(horizon);
    if (horizon > 0) {
        w.column.front() = endpoint_weight;
        w.column.back() = endpoint_weight;
    }
    return w;
}

namespace {

double cell_weight(const ConditionMatrix& layout, const LossWeights& weights, std::size_t r, std::size_t c) {
    return layout.row_kind(r) == RowKind::action ? weights.column[c] : 1.0;
}

void check_loss_shapes(const Matrix& pred, const Matrix& target, const ConditionMatrix& layout,
                       const LossWeights& weights) {
    if (!pred.same_shape(target) || !pred.same_shape(layout.values()))
        throw Error("shape_mismatch", "prediction, target and layout shapes differ");
    if (weights.column.size() != pred.cols()) throw Error("shape_mismatch", "need one loss weight per column");
}

}  // namespace

double weighted_mse(const Matrix& pred, const Matrix& target, const ConditionMatrix& layout,
                    const LossWeights& weights) {
    check_loss_shapes(pred, target, layout, weights);
    double total = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r)
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double d = pred(r, c) - target(r, c);
            total += cell_weight(layout, weights, r, c) * d * d;
        }
    return total;
}

// ---- reference denoiser -----------------------------------------------------

std::vector<double> time_embedding(std::size_t step, std::size_t dim) {
    std::vector<double> out(dim, 0.0);
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out[2 * k] = std::sin(static_cast<double>(step) * freq);
        out[2 * k + 1] = std::cos(static_cast<double>(step) * freq);
    }
    return out;
}

MlpDenoiser::MlpDenoiser(std::size_t grid_rows, std::size_t grid_cols, std::vector<std::size_t> hidden,
                         std::size_t time_embedding_dim, std::uint64_t seed)
    : rows_(grid_rows), cols_(grid_cols), time_dim_(time_embedding_dim) {
    std::vector<std::size_t> sizes{rows_ * cols_ + time_dim_};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(rows_ * cols_);
    net_ = Mlp(std::move(sizes), seed);
}

std::vector<std::size_t> MlpDenoiser::hidden_sizes() const {
    const auto& s = net_.sizes();
    return {s.begin() + 1, s.end() - 1};
}

Matrix MlpDenoiser::pack_inputs(std::span<const Matrix> noisy, std::span<const std::size_t> steps) const {
    if (noisy.size() != steps.size()) throw Error("shape_mismatch", "one step index per grid");
    const std::size_t cells = rows_ * cols_;
    Matrix in(noisy.size(), cells + time_dim_);
    for (std::size_t b = 0; b < noisy.size(); ++b) {
        if (noisy[b].rows() != rows_ || noisy[b].cols() != cols_)
            throw Error("shape_mismatch", "grid shape does not match the denoiser");
        auto row = in.row(b);
        std::copy(noisy[b].data().begin(), noisy[b].data().end(), row.begin());
        const auto emb = time_embedding(steps[b], time_dim_);
        std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(cells));
    }
    return in;
}

Matrix MlpDenoiser::forward_batch(std::span<const Matrix> noisy, std::span<const std::size_t> steps,
                                  Mlp::Cache* cache) const {
    return net_.forward(pack_inputs(noisy, steps), cache);
}

Matrix MlpDenoiser::unpack_row(const Matrix& batch_out, std::size_t row) const {
    Matrix grid(rows_, cols_);
    auto src = batch_out.row(row);
    std::copy(src.begin(), src.end(), grid.data().begin());
    return grid;
}

Matrix MlpDenoiser::predict(const Matrix& noisy, std::size_t step) const {
    const Matrix* one = &noisy;
    return unpack_row(forward_batch(std::span<const Matrix>(one, 1), std::span<const std::size_t>(&step, 1), nullptr), 0);
}

// ---- reverse process --------------------------------------------------------

Matrix denoise_step(const Matrix& noisy, std::size_t step, const Denoiser& denoiser,
                    const NoiseSchedule& schedule, Rng& rng) {
    if (step < 1 || step > schedule.steps()) throw Error("step_out_of_range", "diffusion step out of range");
    Matrix x0_hat = denoiser.predict(noisy, step);
    if (!x0_hat.same_shape(noisy)) throw Error("shape_mismatch", "denoiser changed the grid shape");
    // Posterior mean at n = 1 is x̂_0 itself.
    if (step == 1) return x0_hat;

    const double beta = schedule.beta_at(step);
    const double ab = schedule.alpha_bar_at(step);
    const double ab_prev = schedule.alpha_bar_at(step - 1);
    const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
    const double cn = (1.0 - ab_prev) * std::sqrt(1.0 - beta) / (1.0 - ab);
    const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));

    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(noisy.rows(), noisy.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = c0 * x0_hat.data()[i] + cn * noisy.data()[i] + sigma * normal(rng);
    return out;
}

Matrix sample(const Denoiser& denoiser, const ConditionMatrix& templ, const NoiseSchedule& schedule, Rng& rng) {
    Matrix x = gaussian_like(templ.rows(), templ.cols(), rng);
    project_conditions_inplace(x, templ);
    for (std::size_t n = schedule.steps(); n >= 1; --n) {
        x = denoise_step(x, n, denoiser, schedule, rng);
        project_conditions_inplace(x, templ);
    }
    return x;
}

// ---- training ---------------------------------------------------------------

namespace {

std::size_t action_cells(const ConditionMatrix& layout) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < layout.rows(); ++r)
        for (std::size_t c = 0; c < layout.cols(); ++c)
            if (!layout.is_condition(r, c)) ++n;
    return std::max<std::size_t>(n, 1);
}

double learning_rate_at(const TrainConfig& config, std::size_t step) {
    double lr = config.learning_rate;
    if (config.warmup_steps > 0 && step < config.warmup_steps)
        lr *= static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
    for (const auto& [at, factor] : config.decay)
        if (step >= at) lr *= factor;
    return lr;
}

}  // namespace

std::pair<double, std::vector<double>> loss_and_gradient(const MlpDenoiser& denoiser,
                                                         std::span<const Matrix> noisy,
                                                         std::span<const std::size_t> steps,
                                                         std::span<const ConditionMatrix> targets,
                                                         const LossWeights& weights) {
    if (noisy.size() != targets.size() || noisy.empty())
        throw Error("shape_mismatch", "need one target per noisy grid");
    Mlp::Cache cache;
    const Matrix out = denoiser.forward_batch(noisy, steps, &cache);
    Matrix grad_out(out.rows(), out.cols());
    const double batch = static_cast<double>(noisy.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < noisy.size(); ++b) {
        const ConditionMatrix& target = targets[b];
        Matrix pred = denoiser.unpack_row(out, b);
        project_conditions_inplace(pred, target);
        const double scale = 1.0 / (batch * static_cast<double>(action_cells(target)));
        loss += scale * weighted_mse(pred, target.values(), target, weights);
        auto g = grad_out.row(b);
        for (std::size_t r = 0; r < pred.rows(); ++r)
            for (std::size_t c = 0; c < pred.cols(); ++c) {
                if (target.is_condition(r, c)) continue;  // projected: no gradient
                const double d = pred(r, c) - target.values()(r, c);
                g[r * pred.cols() + c] = scale * 2.0 * cell_weight(target, weights, r, c) * d;
            }
    }
    return {loss, denoiser.network().backward(cache, grad_out)};
}

TrainReport train(MlpDenoiser& denoiser, std::span<const ConditionMatrix> dataset, const NoiseSchedule& schedule,
                  const LossWeights& weights, const TrainConfig& config) {
    if (dataset.empty()) throw Error("empty_dataset", "training set is empty");
    if (config.batch_size == 0) throw Error("invalid_config", "batch size must be positive");
    if (!(config.learning_rate > 0.0)) throw Error("invalid_config", "learning rate must be positive");
    for (const auto& s : dataset)
        if (!s.same_layout(dataset.front())) throw Error("layout_mismatch", "training samples differ in layout");
    if (weights.column.size() != dataset.front().cols())
        throw Error("shape_mismatch", "need one loss weight per column");

    TrainReport report;
    Rng rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick_step(1, schedule.steps());
    std::vector<double> params = denoiser.network().parameters();
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
            const std::size_t last = std::min(order.size(), first + config.batch_size);
            std::vector<Matrix> noisy;
            std::vector<std::size_t> steps;
            std::vector<ConditionMatrix> targets;
            for (std::size_t i = first; i < last; ++i) {
                const ConditionMatrix& sample = dataset[order[i]];
                const std::size_t n = pick_step(rng);
                Matrix eps = gaussian_like(sample.rows(), sample.cols(), rng);
                Matrix x = forward_diffuse(sample.values(), n, eps, schedule);
                project_conditions_inplace(x, sample);
                noisy.push_back(std::move(x));
                steps.push_back(n);
                targets.push_back(sample);
            }
            auto [loss, grad] = loss_and_gradient(denoiser, noisy, steps, targets, weights);
            if (!std::isfinite(loss))
                throw Error("diverged", "training diverged at step " + std::to_string(report.steps) +
                                            " (loss " + std::to_string(loss) + ")");
            if (config.gradient_clip > 0.0) {
                double norm = 0.0;
                for (double g : grad) norm += g * g;
                norm = std::sqrt(norm);
                if (norm > config.gradient_clip)
                    for (double& g : grad) g *= config.gradient_clip / norm;
            }
            const double lr = learning_rate_at(config, report.steps);
            for (std::size_t i = 0; i < params.size(); ++i) {
                velocity[i] = config.momentum * velocity[i] + grad[i];
                params[i] -= lr * velocity[i];
            }
            denoiser.network().set_parameters(params);
            report.loss_trace.push_back(loss);
            ++report.steps;
        }
    }
    return report;
}

}  // namespace procplan
