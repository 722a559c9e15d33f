#include "delayformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "delayformer/errors.hpp"

namespace delayformer {

namespace {

double eval_loss(const LossBuilder& build, const std::vector<Tensor>& point) {
    Tape tape;
    std::vector<Var> params;
    params.reserve(point.size());
    for (const Tensor& p : point) params.push_back(tape.leaf(p, /*trainable=*/false));
    Var loss = build(tape, params);
    if (loss.value().size() != 1) throw ContractError("gradcheck: loss must be scalar");
    return loss.value()[0];
}

}  // namespace

GradCheckReport finite_diff_gradcheck(const LossBuilder& build, const std::vector<Tensor>& point,
                                      double h, std::size_t max_coords, std::mt19937_64& rng) {
    if (h <= 0.0) throw ContractError("gradcheck: h must be positive");

    // Analytic gradients once, at the unperturbed point.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> params;
        params.reserve(point.size());
        for (const Tensor& p : point) params.push_back(tape.leaf(p, /*trainable=*/true));
        Var loss = build(tape, params);
        if (loss.value().size() != 1) throw ContractError("gradcheck: loss must be scalar");
        tape.backward(loss);
        for (const Var& p : params) analytic.push_back(tape.grad(p.id));
    }

    // Global coordinate index space across all point tensors.
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t t = 0; t < point.size(); ++t)
        for (std::size_t i = 0; i < point[t].size(); ++i) coords.emplace_back(t, i);
    if (max_coords > 0 && max_coords < coords.size()) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
    }

    GradCheckReport report;
    std::vector<Tensor> probe = point;
    for (const auto& [t, i] : coords) {
        const double saved = probe[t][i];
        probe[t][i] = saved + h;
        const double fp = eval_loss(build, probe);
        probe[t][i] = saved - h;
        const double fm = eval_loss(build, probe);
        probe[t][i] = saved;

        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[t][i];
        const double err =
            std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_param = t;
            report.worst_coord = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
        ++report.coords_checked;
    }
    return report;
}

}  // namespace delayformer
