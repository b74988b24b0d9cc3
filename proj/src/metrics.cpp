#include "iqe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace iqe {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    if (scores.empty()) throw std::invalid_argument("auroc: empty input");
    long n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
        n_pos += l;
    }
    const long n = (long)scores.size();
    const long n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auroc undefined: only one class present");

    std::vector<long> order(scores.size());
    std::iota(order.begin(), order.end(), 0l);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return scores[(size_t)a] < scores[(size_t)b]; });

    // average ranks over tie runs, 1-based
    double pos_rank_sum = 0.0;
    long i = 0;
    while (i < n) {
        long j = i;
        while (j + 1 < n && scores[(size_t)order[(size_t)j + 1]] == scores[(size_t)order[(size_t)i]]) ++j;
        const double avg_rank = 0.5 * (double)((i + 1) + (j + 1));
        for (long t = i; t <= j; ++t)
            if (labels[(size_t)order[(size_t)t]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    return (pos_rank_sum - (double)n_pos * ((double)n_pos + 1.0) / 2.0) / ((double)n_pos * (double)n_neg);
}

namespace {

std::string fmt(double v, const char* spec = "%.9f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string row_line(const EvalRow& r) {
    std::ostringstream out;
    out << r.domain << "," << r.seed_label << "," << fmt(r.ac_auroc) << ","
        << (r.has_as ? fmt(r.as_auroc) : std::string()) << "," << r.n_images << "," << r.n_pixels
        << "," << fmt(r.wall_seconds, "%.3f");
    return out.str();
}

}  // namespace

std::string render_report(const std::vector<EvalRow>& rows) {
    std::ostringstream out;
    out << "domain,seed,ac_auroc,as_auroc,n_images,n_pixels,wall_seconds\n";
    std::vector<std::string> domain_order;
    std::map<std::string, std::vector<const EvalRow*>> by_domain;
    for (const auto& r : rows) {
        if (!by_domain.count(r.domain)) domain_order.push_back(r.domain);
        by_domain[r.domain].push_back(&r);
        out << row_line(r) << "\n";
    }
    for (const auto& name : domain_order) {
        const auto& group = by_domain[name];
        auto stats = [&](auto get, bool& any) {
            std::vector<double> v;
            for (const auto* r : group) v.push_back(get(*r));
            any = !v.empty();
            double mean = 0;
            for (double x : v) mean += x;
            mean /= (double)v.size();
            double var = 0;
            for (double x : v) var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / (double)(v.size() - 1)) : 0.0;
            return std::pair<double, double>(mean, sd);
        };
        bool dummy = false;
        auto ac = stats([](const EvalRow& r) { return r.ac_auroc; }, dummy);
        const bool all_as = std::all_of(group.begin(), group.end(), [](const EvalRow* r) { return r->has_as; });
        std::pair<double, double> as{0, 0};
        if (all_as) as = stats([](const EvalRow& r) { return r.as_auroc; }, dummy);
        EvalRow mean_row{name, "AGGREGATE_MEAN", ac.first, as.first, all_as,
                         group.front()->n_images, group.front()->n_pixels, 0.0};
        EvalRow std_row{name, "AGGREGATE_STD", ac.second, as.second, all_as,
                        group.front()->n_images, group.front()->n_pixels, 0.0};
        double wall_sum = 0;
        for (const auto* r : group) wall_sum += r->wall_seconds;
        mean_row.wall_seconds = wall_sum / (double)group.size();
        out << row_line(mean_row) << "\n" << row_line(std_row) << "\n";
    }
    return out.str();
}

void write_report(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << render_report(rows);
}

}  // namespace iqe
