#pragma once

#include "natsr/likelihood.hpp"
#include "natsr/linalg.hpp"
#include "natsr/network.hpp"

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace natsr {

/// How the Fisher of the combined new + replay objective is represented.
///  - kfac_mc:       per-layer Kronecker factors, G from k predictive draws
///  - kfac_analytic: per-layer Kronecker factors, G from the closed-form κ
///  - dense:         full P×P matrix Σ c·κ·JᵀJ (small networks only)
enum class FisherMode { kfac_mc, kfac_analytic, dense };

/// How τ is added to a Kronecker-factored Fisher before inversion.
///  - exact:    (A⊗G + τI)⁻¹ through the eigenbases of A and G
///  - factored: (A + √τI)⁻¹ ⊗ (G + √τI)⁻¹
enum class KfacDamping { exact, factored };

std::string to_string(FisherMode m);
FisherMode parse_fisher_mode(const std::string& s);
std::string to_string(KfacDamping d);
KfacDamping parse_kfac_damping(const std::string& s);

struct KronFactors {
    Matrix a; ///< (in+1)×(in+1), input second moments
    Matrix g; ///< out×out, pre-activation gradient second moments
};

struct KfacLayerState {
    Matrix a_ema;
    Matrix g_ema;
    std::optional<SymmetricEigen> a_eigen;
    std::optional<SymmetricEigen> g_eigen;
    std::optional<SpdFactor> a_factor;
    std::optional<SpdFactor> g_factor;
    std::size_t refreshed_at = 0;
};

/// Weight of each sample in the combined objective: 1/|N| for new samples and
/// λ/|B| for replayed ones.
struct CurvatureBatch {
    std::span<const Vector> new_inputs;
    std::span<const Vector> replay_inputs;
    double lambda = 1.0;
};

/// Monte-Carlo K-FAC factors. A = Σc·E[āāᵀ]/Σc (per-position mean for the
/// conv layer), G = Σc·E_y[ĝĝᵀ] with y drawn k times from the predictive.
std::vector<KronFactors> mc_fisher_factors(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec,
                                           std::size_t k, std::mt19937_64& rng);

/// As mc_fisher_factors, but the expectation over y is taken in closed form
/// using Var[score] = κ·I.
std::vector<KronFactors> analytic_fisher_factors(const Network& net, const CurvatureBatch& batch,
                                                 const StudentTSpec& spec);

/// Σ c·κ·JᵀJ over the batch.
Matrix dense_fisher(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec);

/// Convex combination (1−α)·state + α·new; the first call initializes.
void update_factor_emas(std::vector<KfacLayerState>& layers, const std::vector<KronFactors>& fresh, double alpha);

/// Running mean/variance of recently observed losses. The first `burn_in`
/// observations are averaged arithmetically, later ones through EMAs.
struct LossStats {
    double mean = 0.0;
    double var = 0.0;
    double ema_weight = 0.01;
    std::size_t count = 0;
    std::size_t burn_in = 10;

    void observe(double loss);
};

/// Upper 1% quantile of the standard normal.
inline constexpr double kWorstOnePercentZ = 2.3263478740408408;

/// True during burn-in, when the FIM is stale, or when the loss z-score exceeds
/// z_threshold.
bool refresh_decision(double current_loss, const LossStats& stats, std::size_t steps_since_refresh,
                      std::size_t max_stale, double z_threshold = kWorstOnePercentZ);

/// (1/4)·√((ν+1)(ν+3)m/(τν)): the largest 2-norm a damped natural-gradient
/// step under the Student's-t loss can take.
double bound_value(const StudentTSpec& spec, std::size_t m, double tau);

/// Owns the smoothed curvature and its damped inverse for one run.
class CurvatureEngine {
public:
    CurvatureEngine(FisherMode mode, KfacDamping damping, double alpha_ema);

    /// Recomputes the Fisher on `batch`, folds it into the EMA and re-factors
    /// the damped inverse with `tau`.
    void refresh(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec, std::size_t mc_samples,
                 double tau, std::mt19937_64& rng, std::size_t step);

    /// Damped natural direction F⁻¹·grad with the τ of the last refresh.
    Vector natural_direction(const Network& net, std::span<const double> grad) const;
    /// As above, re-factoring first if τ moved by more than 1e-12.
    Vector natural_direction(const Network& net, std::span<const double> grad, double tau);

    /// Installs explicit per-layer factors (bypassing estimation).
    void set_factors(const std::vector<KronFactors>& factors, double tau);
    void set_dense(const Matrix& fisher, double tau);

    bool ready() const { return ready_; }
    double cached_tau() const { return tau_; }
    FisherMode mode() const { return mode_; }
    const std::vector<KfacLayerState>& layers() const { return layers_; }
    const Matrix& dense_ema() const { return dense_ema_; }

private:
    void refactor(double tau);

    FisherMode mode_;
    KfacDamping damping_;
    double alpha_ema_;
    std::vector<KfacLayerState> layers_;
    Matrix dense_ema_;
    std::optional<SpdFactor> dense_factor_;
    double tau_ = 0.0;
    bool ready_ = false;
};

} // namespace natsr
