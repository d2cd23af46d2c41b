#pragma once

#include "stylestage/errors.hpp"
#include "stylestage/tensor.hpp"

#include <cmath>

namespace stylestage {

struct GuidanceScales {
    double lambda_n = 7.5;  // classifier-free
    double lambda_s = 0.0;  // style
    double lambda_c = 0.0;  // context

    void validate() const {
        for (double v : {lambda_n, lambda_s, lambda_c}) {
            if (!std::isfinite(v) || v < 0.0) throw ValidationError("guidance scales must be finite and non-negative");
        }
    }
};

// eps(null), eps(v), eps(v_s), eps(v_c) for one denoising step.
struct GuidanceInputs {
    NoiseTensor null;
    NoiseTensor full;
    NoiseTensor style;
    NoiseTensor context;

    void validate() const;
};

// Combined style/context guidance on top of classifier-free guidance:
//   e0 + ln(ev - e0) + lc(evc - e0) + ls(ev - evc) + ls(evs - e0) + lc(ev - evs)
template <typename D0, typename DV, typename DS, typename DC>
typename D0::PlainObject compose_guidance(const Eigen::MatrixBase<D0>& eps_null, const Eigen::MatrixBase<DV>& eps_full,
                                          const Eigen::MatrixBase<DS>& eps_style,
                                          const Eigen::MatrixBase<DC>& eps_context, const GuidanceScales& s) {
    return eps_null + s.lambda_n * (eps_full - eps_null) + s.lambda_c * (eps_context - eps_null) +
           s.lambda_s * (eps_full - eps_context) + s.lambda_s * (eps_style - eps_null) +
           s.lambda_c * (eps_full - eps_style);
}

// Context-first decomposition: e0 + lc(evc - e0) + ls(ev - evc).
template <typename D0, typename DV, typename DC>
typename D0::PlainObject compose_guidance_v1(const Eigen::MatrixBase<D0>& eps_null, const Eigen::MatrixBase<DV>& eps_full,
                                             const Eigen::MatrixBase<DC>& eps_context, double lambda_s,
                                             double lambda_c) {
    return eps_null + lambda_c * (eps_context - eps_null) + lambda_s * (eps_full - eps_context);
}

// Style-first decomposition: e0 + ls(evs - e0) + lc(ev - evs).
template <typename D0, typename DV, typename DS>
typename D0::PlainObject compose_guidance_v2(const Eigen::MatrixBase<D0>& eps_null, const Eigen::MatrixBase<DV>& eps_full,
                                             const Eigen::MatrixBase<DS>& eps_style, double lambda_s,
                                             double lambda_c) {
    return eps_null + lambda_s * (eps_style - eps_null) + lambda_c * (eps_full - eps_style);
}

NoiseTensor compose_guidance(const GuidanceInputs& inputs, const GuidanceScales& scales);
NoiseTensor compose_guidance_v1(const GuidanceInputs& inputs, double lambda_s, double lambda_c);
NoiseTensor compose_guidance_v2(const GuidanceInputs& inputs, double lambda_s, double lambda_c);

// Which conditioned passes carry at least one nonzero-scale term. The null
// pass is always needed.
struct GuidancePasses {
    bool full = false;
    bool style = false;
    bool context = false;

    int count() const { return 1 + int(full) + int(style) + int(context); }
};

GuidancePasses required_passes(const GuidanceScales& scales);

}  // namespace stylestage
