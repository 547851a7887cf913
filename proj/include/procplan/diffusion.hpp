#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "procplan/matrix.hpp"
#include "procplan/mlp.hpp"

namespace procplan {

using Rng = std::mt19937_64;

// ---- noise schedule ---------------------------------------------------------

struct NoiseSchedule {
    std::vector<double> beta;       // beta[n - 1] = β_n
    std::vector<double> alpha_bar;  // alpha_bar[n - 1] = ᾱ_n = Π_{s<=n} (1 - β_s)
    double beta_start = 0.0;
    double beta_end = 0.0;

    std::size_t steps() const { return beta.size(); }
    /// ᾱ_n with ᾱ_0 = 1.
    double alpha_bar_at(std::size_t n) const { return n == 0 ? 1.0 : alpha_bar[n - 1]; }
    double beta_at(std::size_t n) const { return beta[n - 1]; }
};

/// Linear β from beta_start to beta_end over `steps` steps. Throws Error unless
/// steps >= 1 and 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

/// x_n = sqrt(ᾱ_n)·x_0 + sqrt(1 - ᾱ_n)·ε, elementwise.
Matrix forward_diffuse(const Matrix& x0, std::size_t n, const Matrix& eps,
                       const NoiseSchedule& schedule);

Matrix gaussian_like(std::size_t rows, std::size_t cols, Rng& rng);

// ---- conditioning layout ----------------------------------------------------

enum class CellRole : std::uint8_t { observation, recommendation, action, zero_pad };
enum class RowKind : std::uint8_t { observation, recommendation, action };

/// A rows x T grid with a role for every cell. Cells whose role is not
/// `action` are conditions: they hold fixed values and are restored by
/// project_conditions.
class ConditionMatrix {
public:
    ConditionMatrix() = default;
    ConditionMatrix(std::vector<RowKind> row_kinds, std::size_t columns);

    std::size_t rows() const { return values_.rows(); }
    std::size_t cols() const { return values_.cols(); }

    Matrix& values() { return values_; }
    const Matrix& values() const { return values_; }

    RowKind row_kind(std::size_t r) const { return row_kinds_[r]; }
    const std::vector<RowKind>& row_kinds() const { return row_kinds_; }
    CellRole role(std::size_t r, std::size_t c) const { return roles_[r * cols() + c]; }
    void set_role(std::size_t r, std::size_t c, CellRole role) { roles_[r * cols() + c] = role; }
    bool is_condition(std::size_t r, std::size_t c) const { return role(r, c) != CellRole::action; }

    /// Same layout and roles (values may differ).
    bool same_layout(const ConditionMatrix& other) const;

    friend bool operator==(const ConditionMatrix&, const ConditionMatrix&) = default;

private:
    Matrix values_;
    std::vector<RowKind> row_kinds_;
    std::vector<CellRole> roles_;
};

/// Overwrites every condition cell of `x` with the template value. Action cells
/// are left as they are. Throws Error("layout_mismatch") on shape mismatch.
void project_conditions_inplace(Matrix& x, const ConditionMatrix& templ);
Matrix project_conditions(const Matrix& x, const ConditionMatrix& templ);

// ---- loss -------------------------------------------------------------------

/// Per-column weights applied to cells of action rows; every other cell has
/// weight 1.
struct LossWeights {
    std::vector<double> column;

    static LossWeights uniform(std::size_t horizon);
    /// `endpoint_weight` at the first and last column, 1 elsewhere.
    static LossWeights endpoints(std::size_t horizon, double endpoint_weight);
};

inline constexpr double kStepModelEndpointWeight = 10.0;
inline constexpr double kPlanningModelEndpointWeight = 5.0;

/// Σ weight(cell)·(pred - target)² over all cells.
double weighted_mse(const Matrix& pred, const Matrix& target, const ConditionMatrix& layout,
                    const LossWeights& weights);

// ---- denoisers --------------------------------------------------------------

/// f(x_n, n): predicts the clean grid x_0 from a noisy grid at step n.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Matrix predict(const Matrix& noisy, std::size_t step) const = 0;
};

/// Reference denoiser: an Mlp over the flattened grid concatenated with a
/// sinusoidal embedding of the step index.
class MlpDenoiser : public Denoiser {
public:
    MlpDenoiser() = default;
    MlpDenoiser(std::size_t grid_rows, std::size_t grid_cols, std::vector<std::size_t> hidden,
                std::size_t time_embedding_dim, std::uint64_t seed);

    Matrix predict(const Matrix& noisy, std::size_t step) const override;

    /// Batch forward; returns one B x (rows·cols) matrix and fills `cache`.
    Matrix forward_batch(std::span<const Matrix> noisy, std::span<const std::size_t> steps,
                         Mlp::Cache* cache) const;
    Matrix pack_inputs(std::span<const Matrix> noisy, std::span<const std::size_t> steps) const;
    Matrix unpack_row(const Matrix& batch_out, std::size_t row) const;

    std::size_t grid_rows() const { return rows_; }
    std::size_t grid_cols() const { return cols_; }
    std::size_t time_embedding_dim() const { return time_dim_; }
    std::vector<std::size_t> hidden_sizes() const;

    Mlp& network() { return net_; }
    const Mlp& network() const { return net_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t time_dim_ = 0;
    Mlp net_;
};

/// Sinusoidal features [sin(n·f_k), cos(n·f_k)], f_k = 10000^(-k / (dim/2)).
std::vector<double> time_embedding(std::size_t step, std::size_t dim);

// ---- reverse process --------------------------------------------------------

/// One reverse step with the x_0-prediction posterior:
/// mean = c0·x̂_0 + cn·x_n, var = β_n (1 - ᾱ_{n-1}) / (1 - ᾱ_n).
/// At n = 1 the mean is returned without noise.
Matrix denoise_step(const Matrix& noisy, std::size_t step, const Denoiser& denoiser,
                    const NoiseSchedule& schedule, Rng& rng);

/// Starts from Gaussian action cells and template condition cells, then runs
/// denoise_step + project_conditions for n = N..1.
Matrix sample(const Denoiser& denoiser, const ConditionMatrix& templ,
              const NoiseSchedule& schedule, Rng& rng);

// ---- training ---------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    /// Linear warm-up over this many optimizer steps (0 = none).
    std::size_t warmup_steps = 0;
    /// (step, factor): multiply the learning rate by factor from step onwards.
    std::vector<std::pair<std::size_t, double>> decay;
    /// Clip each gradient to this L2 norm (0 = no clipping).
    double gradient_clip = 0.0;
};

struct TrainReport {
    std::vector<double> loss_trace;  // one entry per optimizer step
    std::size_t steps = 0;
};

/// Each sample in `dataset` carries its conditions and its ground-truth action
/// cells. Per optimizer step: draw n ~ U{1..N} and ε per sample, noise the
/// grid, project conditions, predict x̂_0, project it, and take a momentum-SGD
/// step on the batch mean of weighted_mse / number of action cells. Throws
/// Error("diverged") on a non-finite loss.
TrainReport train(MlpDenoiser& denoiser, std::span<const ConditionMatrix> dataset,
                  const NoiseSchedule& schedule, const LossWeights& weights,
                  const TrainConfig& config);

/// Batch loss (as minimised by train) and its flat parameter gradient for fixed
/// noisy inputs. Exposed for gradient checks.
std::pair<double, std::vector<double>> loss_and_gradient(
    const MlpDenoiser& denoiser, std::span<const Matrix> noisy, std::span<const std::size_t> steps,
    std::span<const ConditionMatrix> targets, const LossWeights& weights);

}  // namespace procplan
