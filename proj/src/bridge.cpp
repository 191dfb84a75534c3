#include "bdan/bridge.hpp"

#include <cmath>
#include <stdexcept>

#include "bdan/kernels.hpp"

namespace bdan {

namespace {

void require_features(const Tensor& z, const char* what) {
    if (z.rank() != 4)
        throw std::invalid_argument(std::string(what) + ": expected (n, f, e, p), got " + shape_string(z.shape()));
}

Tensor as_base(const Tensor& b) {
    if (b.rank() == 4 && b.dim(0) == 1) return squeeze_leading(b);
    if (b.rank() == 3) return b;
    throw std::invalid_argument("lambda: expected (e, n, t) or (1, e, n, t), got " + shape_string(b.shape()));
}

}  // namespace

ElectrodeView to_electrode_view(const Tensor& z) {
    require_features(z, "to_electrode_view");
    const std::size_t n = z.dim(0), f = z.dim(1), e = z.dim(2), p = z.dim(3);
    ElectrodeView v;
    v.base = reshape(permute(z, {2, 0, 1, 3}), {e, n, f * p});
    v.expanded = expand(v.base);
    return v;
}

Tensor global_mean(const Tensor& source_z0, const Tensor& target_z0) {
    require_features(source_z0, "global_mean");
    require_features(target_z0, "global_mean");
    if (source_z0.dim(1) != target_z0.dim(1) || source_z0.dim(2) != target_z0.dim(2) ||
        source_z0.dim(3) != target_z0.dim(3))
        throw std::invalid_argument("global_mean: feature shapes differ " + shape_string(source_z0.shape()) + " vs " +
                                    shape_string(target_z0.shape()));
    const std::size_t ns = source_z0.dim(0), nt = target_z0.dim(0);
    const std::size_t m = source_z0.size() / ns;
    auto per_domain = [m](const Tensor& z) {
        const std::size_t n = z.dim(0);
        auto v = z.data();
        std::vector<Real> acc(m, Real(0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < m; ++k) acc[k] += v[i * m + k];
        for (auto& a : acc) a /= static_cast<Real>(n);
        return acc;
    };
    const auto ms = per_domain(source_z0);
    const auto mt = per_domain(target_z0);
    const Real ws = static_cast<Real>(ns) / static_cast<Real>(ns + nt);
    const Real wt = static_cast<Real>(nt) / static_cast<Real>(ns + nt);
    std::vector<Real> blend(m);
    for (std::size_t k = 0; k < m; ++k) blend[k] = ws * ms[k] + wt * mt[k];
    return Tensor::from({source_z0.dim(1), source_z0.dim(2), source_z0.dim(3)}, std::move(blend));
}

Real feature_std(const Tensor& z) {
    if (z.size() < 2) throw std::invalid_argument("feature_std: need at least 2 elements");
    return std_pop(z.detach()).item();
}

Tensor generate_bridging(const Tensor& mean, Real sigma_g, Real sigma_w, std::size_t n_g, Rng& rng) {
    if (n_g == 0) throw std::invalid_argument("generate_bridging: n_g must be positive");
    if (!(sigma_g >= 0) || !(sigma_w >= 0)) throw std::invalid_argument("generate_bridging: negative deviation");
    const std::size_t m = mean.size();
    auto mv = mean.data();
    const Real amplitude = sigma_w * sigma_g;
    std::vector<Real> out(n_g * m);
    if (amplitude == 0) {
        for (std::size_t i = 0; i < n_g; ++i) std::copy(mv.begin(), mv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * m));
    } else {
        std::normal_distribution<Real> gauss(Real(0), Real(1));
        for (std::size_t i = 0; i < n_g; ++i)
            for (std::size_t k = 0; k < m; ++k) out[i * m + k] = mv[k] + amplitude * gauss(rng);
    }
    Shape shape{n_g};
    shape.insert(shape.end(), mean.shape().begin(), mean.shape().end());
    return Tensor::from(std::move(shape), std::move(out));
}

BridgingDomain build_bridging_domain(const Tensor& source_z0, const Tensor& target_z0, std::size_t n_g, bool perturb,
                                     Rng& source_rng, Rng& target_rng) {
    BridgingDomain d;
    d.n_g = n_g;
    d.mean = global_mean(source_z0, target_z0);
    if (perturb) {
        d.sigma_g = feature_std(d.mean);
        d.sigma_s = feature_std(source_z0);
        d.sigma_t = feature_std(target_z0);
    }
    d.samples_for_source = generate_bridging(d.mean, d.sigma_g, d.sigma_s, n_g, source_rng);
    d.samples_for_target = generate_bridging(d.mean, d.sigma_g, d.sigma_t, n_g, target_rng);
    return d;
}

Real lambda_naive(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3) throw std::invalid_argument("lambda_naive: expected (e, n, t), got " + shape_string(a.shape()));
    const Tensor bb = as_base(b);
    if (a.dim(1) != bb.dim(1) || a.dim(2) != bb.dim(2))
        throw std::invalid_argument("lambda_naive: (n, t) axes differ " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    const std::size_t cols = a.dim(1) * a.dim(2);
    return kernels::pairwise_sq_dist_sum(a.data().data(), a.dim(0), bb.data().data(), bb.dim(0), cols);
}

Tensor lambda_fast(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3) throw std::invalid_argument("lambda_fast: expected (e, n, t), got " + shape_string(a.shape()));
    const Tensor bb = as_base(b);
    if (a.dim(1) != bb.dim(1) || a.dim(2) != bb.dim(2))
        throw std::invalid_argument("lambda_fast: (n, t) axes differ " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    const std::size_t ea = a.dim(0), eb = bb.dim(0), m = a.dim(1) * a.dim(2);
    const Tensor self_a = scale(sq_sum(a), static_cast<Real>(eb));
    const Tensor self_b = scale(sq_sum(bb), static_cast<Real>(ea));
    const Tensor cross = gram_sum(reshape(a, {ea, m}), reshape(bb, {eb, m}));
    return sub(add(self_a, self_b), scale(cross, Real(2)));
}

PairDistanceStat stage_loss(const Tensor& z_stage, const Tensor& z_g) {
    require_features(z_stage, "stage_loss");
    if (z_stage.shape() != z_g.shape())
        throw std::invalid_argument("stage_loss: stage features " + shape_string(z_stage.shape()) +
                                    " and bridging samples " + shape_string(z_g.shape()) + " differ");
    const Tensor bridge = z_g.detach();
    const ElectrodeView va = to_electrode_view(z_stage);
    const ElectrodeView vg = to_electrode_view(bridge);

    const Tensor l_aa = lambda_fast(va.base, va.expanded);
    const Tensor l_gg = lambda_fast(vg.base, vg.expanded);
    const Tensor l_ag = lambda_fast(va.base, vg.expanded);

    PairDistanceStat st;
    st.lambda_aa = l_aa.item();
    st.lambda_gg = l_gg.item();
    st.lambda_ag = l_ag.item();

    const Tensor bracket = sub(add(l_aa, l_gg), scale(l_ag, Real(2)));
    st.bracket = bracket.item();

    Real denom = reduce_median(add(z_stage.detach(), bridge)).item();
    if (std::abs(denom) < kDenominatorFloor) denom = denom < 0 ? -kDenominatorFloor : kDenominatorFloor;
    st.denom = denom;

    const Tensor ratio = scale(bracket, Real(1) / denom);
    const Real r = ratio.item();
    st.clamped = r <= -kExponentClamp || r >= kExponentClamp;
    st.loss_tensor = exp(clamp(ratio, -kExponentClamp, kExponentClamp));
    st.loss = st.loss_tensor.item();
    return st;
}

DomainLoss domain_bridging_loss(const Tensor& z1, const Tensor& z2, const Tensor& z_g, int stages) {
    if (stages != 1 && stages != 2) throw std::invalid_argument("domain_bridging_loss: stages must be 1 or 2");
    DomainLoss out;
    out.stage1 = stage_loss(z1, z_g);
    out.total = out.stage1.loss_tensor;
    if (stages == 2) {
        out.stage2 = stage_loss(z2, z_g);
        out.total = add(out.total, out.stage2->loss_tensor);
    }
    return out;
}

}  // namespace bdan
