#pragma once

#include "pelletmpc/ocp.hpp"
#include "pelletmpc/prediction_model.hpp"
#include "pelletmpc/types.hpp"

#include <string>

namespace pelletmpc {

/// Everything a predictive controller needs that does not change between steps.
struct PredictionSetup {
    ExtendedLtiModel model;
    CondensedPrediction prediction;
    Weights weights;
    PathConstraint path;
    ReferenceSignal reference;

    PredictionSetup(ExtendedLtiModel m, int N, Weights w, PathConstraint pc, ReferenceSignal ref)
        : model(std::move(m)), prediction(condense(model, N)), weights(std::move(w)), path(std::move(pc)),
          reference(std::move(ref))
    {
    }

    int horizon() const { return prediction.N; }

    CondensedOcp assemble(const Vector& x0, double t) const
    {
        const Vector x_ref = build_reference_state(reference.at(t), model.n());
        return condense_ocp(prediction, model.x_eq, weights, path, x0, x_ref);
    }
};

/// Outcome of one controller evaluation. Fields that do not apply to a controller stay at their defaults.
struct ControlDecision {
    int u0 = 0;
    double objective = 0.0;  ///< condensed objective of the applied sequence (NaN for relay)
    std::string status;
    bool fallback = false;
    long nodes = 0;          ///< branch-and-bound nodes
    long qp_iterations = 0;
    int homotopy_iterations = 0;
    long inner_iterations = 0;
    bool converged = true;
    Vector sequence;         ///< full input sequence chosen at this step
};

/// Drops the first entry and appends a zero.
inline Vector shift_warm_start(const Vector& U)
{
    Vector out = Vector::Zero(U.size());
    if (U.size() > 1) out.head(U.size() - 1) = U.tail(U.size() - 1);
    return out;
}

}  // namespace pelletmpc
