#pragma once

#include "signmf/dispersion.hpp"
#include "signmf/nmf.hpp"
#include "signmf/rng.hpp"
#include "signmf/types.hpp"

#include <optional>
#include <utility>

namespace signmf {

/// Outcome of the two-stage NB fitting recipe. For a Poisson request only
/// final_fit is set.
struct PipelineResult {
    Factorization final_fit;
    std::optional<Factorization> poisson_stage;  // stage-1 fit the dispersions came from
};

/// Fits a count matrix under the requested model. Poisson is a single
/// multiplicative-update run. The NB models run the two-stage recipe: fit
/// Poisson first, take dispersion MLEs at the Poisson means (per patient, or
/// pooled for the shared model), then run the NB updates from a fresh random
/// start with those dispersions held fixed.
inline PipelineResult run_pipeline(const CountMatrix& v, NmfModel model, const FitConfig& fit_cfg,
                                   const DispersionConfig& disp_cfg = {}) {
    PipelineResult out;
    if (model == NmfModel::Poisson) {
        out.final_fit = po_nmf(v, fit_cfg);
        return out;
    }
    Factorization stage1 = po_nmf(v, fit_cfg);
    const Matrix mu = stage1.fitted_mean();
    DispersionVector alphas = model == NmfModel::NegBinShared
                                  ? DispersionVector::shared(estimate_shared_dispersion(v.counts, mu, disp_cfg),
                                                             v.counts.rows())
                                  : estimate_dispersion(v.counts, mu, disp_cfg);
    FitConfig nb_cfg = fit_cfg;
    nb_cfg.seed = derive_seed(fit_cfg.seed, {0x6e62u});  // fresh initialization for the NB stage
    // A caller-supplied warm start is meant for the final factors, so it
    // carries through to the NB stage; only the default random init is redrawn.
    out.final_fit = nb_nmf(v, alphas, nb_cfg);
    out.final_fit.model = model;  // shared stays shared even if the MLE pools to the Poisson limit
    out.poisson_stage = std::move(stage1);
    return out;
}

inline Factorization fit_model(const CountMatrix& v, NmfModel model, const FitConfig& fit_cfg,
                               const DispersionConfig& disp_cfg = {}) {
    return run_pipeline(v, model, fit_cfg, disp_cfg).final_fit;
}

}  // namespace signmf
