#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "iqe/data.hpp"
#include "iqe/encoders.hpp"

namespace fs = std::filesystem;

namespace iqe {

namespace {

constexpr double kTau = 6.283185307179586;

uint64_t fnv64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void render_texture(const DomainSpec& spec, int side, Rng& rng, std::vector<float>& img) {
    img.assign((size_t)side * side, 0.5f);
    switch (spec.texture) {
        case TextureFamily::kStripes: {
            const double f = spec.frequency * rng.uniform(0.8, 1.2);
            const double theta = spec.orientation + rng.uniform(-0.2, 0.2);
            const double phase = rng.uniform(0.0, kTau);
            const double cs = std::cos(theta), sn = std::sin(theta);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    img[(size_t)y * side + x] =
                        0.5f + 0.20f * (float)std::sin(kTau * f * (x * cs + y * sn) / side + phase);
            break;
        }
        case TextureFamily::kChecker: {
            const double cell = std::max(4.0, side / (2.0 * spec.frequency) * rng.uniform(0.8, 1.2));
            const double ox = rng.uniform(0.0, 2.0 * cell), oy = rng.uniform(0.0, 2.0 * cell);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const int qx = (int)std::floor((x + ox) / cell);
                    const int qy = (int)std::floor((y + oy) / cell);
                    img[(size_t)y * side + x] = 0.5f + (((qx + qy) & 1) ? 0.16f : -0.16f);
                }
            break;
        }
        case TextureFamily::kBlobs: {
            constexpr int kWaves = 6;
            double ux[kWaves], vy[kWaves], ph[kWaves], amp[kWaves];
            double total = 0;
            for (int j = 0; j < kWaves; ++j) {
                ux[j] = rng.uniform(-2.5, 2.5);
                vy[j] = rng.uniform(-2.5, 2.5);
                ph[j] = rng.uniform(0.0, kTau);
                amp[j] = rng.uniform(0.5, 1.0);
                total += amp[j];
            }
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    double b = 0;
                    for (int j = 0; j < kWaves; ++j)
                        b += amp[j] * std::cos(kTau * (ux[j] * x + vy[j] * y) / side + ph[j]);
                    img[(size_t)y * side + x] = 0.5f + 0.34f * (float)(b / total);
                }
            break;
        }
    }
    for (auto& v : img)
        v = std::min(0.98f, std::max(0.02f, v + (float)rng.uniform(-spec.noise, spec.noise)));
}

void apply_defect(const DomainSpec& spec, int side, Rng& rng, int sample_index,
                  std::vector<float>& img, std::vector<float>& mask) {
    // geometry scales with the image side so the defect area fraction holds
    const double s = side / 64.0;
    switch (spec.defect) {
        case DefectFamily::kBrightBlob: {
            const double r = rng.uniform(4.5, 10.0) * s;
            const double cx = rng.uniform(r + 2.0, side - r - 2.0);
            const double cy = rng.uniform(r + 2.0, side - r - 2.0);
            const double amp = rng.uniform(0.40, 0.55);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d2 <= r * r) {
                        img[(size_t)y * side + x] +=
                            (float)(amp * std::pow(1.0 - d2 / (r * r), 0.6));
                        mask[(size_t)y * side + x] = 1.0f;
                    }
                }
            break;
        }
        case DefectFamily::kDarkScratch: {
            const double len = rng.uniform(16.0, 40.0) * s;
            const double t = std::max(1.2, rng.uniform(1.8, 3.2) * s);
            const double margin = len / 2.0 + t + 2.0;
            const double cx = rng.uniform(margin, side - margin);
            const double cy = rng.uniform(margin, side - margin);
            const double ang = rng.uniform(0.0, kTau);
            const double ax = cx - std::cos(ang) * len / 2.0, ay = cy - std::sin(ang) * len / 2.0;
            const double bx = cx + std::cos(ang) * len / 2.0, by = cy + std::sin(ang) * len / 2.0;
            const double amp = rng.uniform(0.40, 0.55);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    // distance from pixel to the segment
                    const double px = x - ax, py = y - ay;
                    const double dx = bx - ax, dy = by - ay;
                    const double seg2 = dx * dx + dy * dy;
                    double u = seg2 > 0 ? (px * dx + py * dy) / seg2 : 0.0;
                    u = std::min(1.0, std::max(0.0, u));
                    const double ex = ax + u * dx - x, ey = ay + u * dy - y;
                    const double d2 = ex * ex + ey * ey;
                    if (d2 <= t * t) {
                        img[(size_t)y * side + x] -=
                            (float)(amp * std::pow(1.0 - d2 / (t * t), 0.8));
                        mask[(size_t)y * side + x] = 1.0f;
                    }
                }
            break;
        }
        case DefectFamily::kTextureSwap: {
            const double rx = rng.uniform(5.0, 10.0) * s;
            const double ry = rng.uniform(5.0, 10.0) * s;
            const double cx = rng.uniform(rx + 2.0, side - rx - 2.0);
            const double cy = rng.uniform(ry + 2.0, side - ry - 2.0);
            // alternate the patch polarity so the family carries both signs
            const double polarity = (sample_index % 2 == 0) ? 1.0 : -1.0;
            const double base = 0.5 + polarity * rng.uniform(0.28, 0.36);
            const double cell = rng.uniform(2.0, 3.5);
            const double ox = rng.uniform(0.0, 2.0 * cell), oy = rng.uniform(0.0, 2.0 * cell);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const double nx = (x - cx) / rx, ny = (y - cy) / ry;
                    if (nx * nx + ny * ny <= 1.0) {
                        const int qx = (int)std::floor((x + ox) / cell);
                        const int qy = (int)std::floor((y + oy) / cell);
                        img[(size_t)y * side + x] =
                            (float)(base + (((qx + qy) & 1) ? 0.10 : -0.10));
                        mask[(size_t)y * side + x] = 1.0f;
                    }
                }
            break;
        }
    }
    for (auto& v : img) v = std::min(0.98f, std::max(0.02f, v));
}

}  // namespace

std::vector<DomainSpec> default_domain_specs() {
    DomainSpec stripes;
    stripes.name = "stripes";
    stripes.class_word = "stripes";
    stripes.texture = TextureFamily::kStripes;
    stripes.defect = DefectFamily::kBrightBlob;
    stripes.frequency = 4.0;
    stripes.orientation = 0.6;

    DomainSpec checker;
    checker.name = "checker";
    checker.class_word = "checker";
    checker.texture = TextureFamily::kChecker;
    checker.defect = DefectFamily::kDarkScratch;
    checker.frequency = 4.5;
    checker.orientation = 0.0;

    DomainSpec blobs;
    blobs.name = "blobs";
    blobs.class_word = "blobs";
    blobs.texture = TextureFamily::kBlobs;
    blobs.defect = DefectFamily::kTextureSwap;
    blobs.frequency = 2.0;
    blobs.orientation = 0.0;

    return {stripes, checker, blobs};
}

SynthSample synth_sample(const DomainSpec& spec, int side, uint64_t dataset_seed, int domain_index,
                         int sample_index, bool abnormal) {
    Rng rng(mix_seed(mix_seed(dataset_seed, (uint64_t)domain_index), (uint64_t)sample_index));
    SynthSample s;
    render_texture(spec, side, rng, s.image);
    s.mask.assign((size_t)side * side, 0.0f);
    if (abnormal) {
        apply_defect(spec, side, rng, sample_index, s.image, s.mask);
        s.label = 1;
    }
    return s;
}

void generate_dataset(const std::vector<DomainSpec>& specs, uint64_t seed, const std::string& out_dir,
                      bool force, int side) {
    fs::path root(out_dir);
    if (fs::exists(root) && !fs::is_empty(root) && !force)
        throw std::runtime_error("output directory not empty (use force): " + out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + out_dir);

    for (size_t di = 0; di < specs.size(); ++di) {
        const auto& spec = specs[di];
        DomainManifest manifest;
        manifest.domain = spec.name;
        manifest.class_word = spec.class_word;

        struct Section {
            const char* split;
            bool abnormal;
            int count;
        };
        const Section sections[] = {{"train", false, spec.train_normal},
                                    {"train", true, spec.train_abnormal},
                                    {"test", false, spec.test_normal},
                                    {"test", true, spec.test_abnormal}};
        int counter = 0;
        for (const auto& sec : sections) {
            const fs::path dir = root / spec.name / sec.split / (sec.abnormal ? "abnormal" : "normal");
            fs::create_directories(dir, ec);
            if (ec) throw std::runtime_error("cannot create directory: " + dir.string());
            for (int i = 0; i < sec.count; ++i, ++counter) {
                auto sample = synth_sample(spec, side, seed, (int)di, counter, sec.abnormal);
                char idbuf[16];
                std::snprintf(idbuf, sizeof(idbuf), "%04d", counter);
                const std::string id(idbuf);
                const fs::path img_path = dir / ("img_" + id + ".pgm");
                const fs::path mask_path = dir / ("mask_" + id + ".pgm");
                write_pgm(img_path.string(), side, side, sample.image.data());
                write_pgm(mask_path.string(), side, side, sample.mask.data());
                ManifestEntry e;
                e.id = id;
                e.split = sec.split;
                e.label = sample.label;
                e.image_path = fs::relative(img_path, root).generic_string();
                e.mask_path = fs::relative(mask_path, root).generic_string();
                manifest.entries.push_back(std::move(e));
            }
        }
        write_manifest((root / spec.name / "manifest.tsv").string(), manifest);
    }
    Tokenizer::from_words(Tokenizer::builtin_words()).save((root / "vocab.txt").string());
}

std::vector<std::string> sample_few_shot(const LoadedDomain& domain, int k, uint64_t seed) {
    if (k < 0) throw std::invalid_argument("few-shot count must be non-negative");
    if (k == 0) return {};
    std::vector<std::string> abnormal, normal;
    for (const auto& s : domain.train) (s.label ? abnormal : normal).push_back(s.id);
    const int n_ab = (k + 1) / 2;
    const int n_no = k - n_ab;
    if ((int)abnormal.size() < n_ab || (int)normal.size() < n_no)
        throw std::runtime_error("few-shot pool smaller than requested K=" + std::to_string(k));
    Rng rng(mix_seed(seed, fnv64(domain.name) + (uint64_t)k));
    auto pick = [&rng](std::vector<std::string> pool, int n) {
        for (size_t i = pool.size() - 1; i > 0; --i)
            std::swap(pool[i], pool[(size_t)rng.uniform_int(0, (int)i)]);
        pool.resize((size_t)n);
        return pool;
    };
    auto ids = pick(abnormal, n_ab);
    auto extra = pick(normal, n_no);
    ids.insert(ids.end(), extra.begin(), extra.end());
    return ids;
}

}  // namespace iqe
