#include "qmark/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qmark/error.hpp"

namespace qmark {

namespace {

// ln C(n, i) - n ln 2, the log of one binomial(n, 1/2) mass term.
double log_mass(std::uint64_t n, std::uint64_t i) {
    const double nd = static_cast<double>(n);
    const double id = static_cast<double>(i);
    return std::lgamma(nd + 1.0) - std::lgamma(id + 1.0) - std::lgamma(nd - id + 1.0) -
           nd * std::numbers::ln2;
}

// ln sum_{i=first}^{last} mass(i), log-sum-exp around the largest term.
double log_tail(std::uint64_t n, std::uint64_t first, std::uint64_t last) {
    std::vector<double> terms;
    terms.reserve(last - first + 1);
    for (std::uint64_t i = first; i <= last; ++i) terms.push_back(log_mass(n, i));
    const double peak = *std::max_element(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - peak);
    return peak + std::log(sum);
}

}  // namespace

StrengthResult watermark_strength(std::uint64_t matched, std::uint64_t total) {
    if (total == 0) throw Error(Errc::invalid_argument, "watermark_strength: total must be >= 1");
    if (matched > total) {
        throw Error(Errc::invalid_argument, "watermark_strength: matched " + std::to_string(matched) +
                                                " exceeds total " + std::to_string(total));
    }
    StrengthResult r;
    r.matched = matched;
    r.total = total;
    if (matched == 0) return r;  // the whole distribution

    double ln_p = 0.0;
    if (2 * matched > total) {
        ln_p = log_tail(total, matched, total);
    } else {
        // Upper tail >= 1/2: go through the (small) lower tail instead.
        ln_p = std::log1p(-std::exp(log_tail(total, 0, matched - 1)));
    }
    r.log10_p = std::min(0.0, ln_p / std::numbers::ln10);
    r.p_value = std::exp(ln_p);
    return r;
}

double multi_layer_strength(std::span<const double> per_layer_log10_p) {
    if (per_layer_log10_p.empty()) {
        throw Error(Errc::invalid_argument, "multi_layer_strength: no layers");
    }
    double sum = 0.0;
    for (double v : per_layer_log10_p) sum += v;
    return sum;
}

double extraction_rate(std::uint64_t matched, std::uint64_t total) {
    if (total == 0) throw Error(Errc::invalid_argument, "extraction_rate: total must be >= 1");
    return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

}  // namespace qmark
