#pragma once
// AUROC via the rank-sum (Mann-Whitney) form with average ranks for ties,
// and the evaluation report CSV.

#include <string>
#include <vector>

namespace iqe {

// Throws when only one class is present; never silently returns chance level.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalRow {
    std::string domain;
    std::string seed_label;  // seed number or an aggregate tag
    double ac_auroc = 0.0;
    double as_auroc = 0.0;
    bool has_as = false;
    long n_images = 0;
    long n_pixels = 0;
    double wall_seconds = 0.0;
};

// Per-row lines plus AGGREGATE_MEAN / AGGREGATE_STD rows per domain.
void write_report(const std::string& path, const std::vector<EvalRow>& rows);
std::string render_report(const std::vector<EvalRow>& rows);

}  // namespace iqe
