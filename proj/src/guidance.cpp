#include "stylestage/guidance.hpp"

namespace stylestage {

void GuidanceInputs::validate() const {
    for (const NoiseTensor* e : {&full, &style, &context}) {
        if (!(e->shape == null.shape) || e->values.size() != null.values.size()) {
            throw ValidationError("guidance inputs have mismatched shapes: " + e->shape.str() + " vs " + null.shape.str());
        }
    }
    for (const NoiseTensor* e : {&null, &full, &style, &context}) {
        if (!e->values.allFinite()) throw NumericError("guidance input is not finite");
    }
}

NoiseTensor compose_guidance(const GuidanceInputs& in, const GuidanceScales& scales) {
    in.validate();
    return {in.null.shape, compose_guidance(in.null.values, in.full.values, in.style.values, in.context.values, scales)};
}

NoiseTensor compose_guidance_v1(const GuidanceInputs& in, double lambda_s, double lambda_c) {
    in.validate();
    return {in.null.shape, compose_guidance_v1(in.null.values, in.full.values, in.context.values, lambda_s, lambda_c)};
}

NoiseTensor compose_guidance_v2(const GuidanceInputs& in, double lambda_s, double lambda_c) {
    in.validate();
    return {in.null.shape, compose_guidance_v2(in.null.values, in.full.values, in.style.values, lambda_s, lambda_c)};
}

GuidancePasses required_passes(const GuidanceScales& s) {
    GuidancePasses p;
    // v appears under ln, ls and lc; v_s and v_c each appear under ls and lc.
    p.full = s.lambda_n != 0.0 || s.lambda_s != 0.0 || s.lambda_c != 0.0;
    p.style = s.lambda_s != 0.0 || s.lambda_c != 0.0;
    p.context = s.lambda_s != 0.0 || s.lambda_c != 0.0;
    return p;
}

}  // namespace stylestage
