#pragma once
// Dataset plumbing: binary PGM images, tab-separated manifests, the on-disk
// layout root/<domain>/{train,test}/{normal,abnormal}/, and the synthetic
// texture-defect generator that fills it.

#include <optional>
#include <string>
#include <vector>

#include "iqe/tensor.hpp"

namespace iqe {

struct PgmImage {
    int width = 0, height = 0;
    std::vector<float> pixels;  // row-major, [0,1]
};

PgmImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, int width, int height, const float* values);

// Image as an [H x W] tensor for the encoders.
Tensor pgm_to_tensor(const PgmImage& img);

struct ManifestEntry {
    std::string id;
    std::string split;  // "train" or "test"
    int label = 0;
    std::string image_path;  // relative to the dataset root
    std::string mask_path;   // "-" when only an image-level label exists
};

struct DomainManifest {
    std::string domain;
    std::string class_word;
    std::vector<ManifestEntry> entries;
};

void write_manifest(const std::string& path, const DomainManifest& m);
DomainManifest read_manifest(const std::string& path);

struct LoadedSample {
    std::string id;
    int label = 0;
    Tensor image;
    Tensor mask;  // undefined when has_mask is false
    bool has_mask = false;
};

struct LoadedDomain {
    std::string name;
    std::string class_word;
    std::vector<LoadedSample> train, test;
};

struct Dataset {
    std::vector<LoadedDomain> domains;  // sorted by name
    const LoadedDomain* find(const std::string& name) const;
};

Dataset load_dataset(const std::string& root);

// ---- synthetic benchmark ----------------------------------------------------

enum class TextureFamily { kStripes, kChecker, kBlobs };
enum class DefectFamily { kBrightBlob, kDarkScratch, kTextureSwap };

struct DomainSpec {
    std::string name;
    std::string class_word;
    TextureFamily texture = TextureFamily::kStripes;
    DefectFamily defect = DefectFamily::kBrightBlob;
    double frequency = 4.0;    // texture cycles across the image
    double orientation = 0.6;  // radians
    double noise = 0.03;
    int train_normal = 200;
    int train_abnormal = 40;
    int test_normal = 50;
    int test_abnormal = 50;
};

std::vector<DomainSpec> default_domain_specs();

struct SynthSample {
    std::vector<float> image;  // side x side
    std::vector<float> mask;
    int label = 0;
};

// One fully determined sample; the generator and tests share this entry point.
SynthSample synth_sample(const DomainSpec& spec, int side, uint64_t dataset_seed, int domain_index,
                         int sample_index, bool abnormal);

// Writes images, masks, per-domain manifests, and vocab.txt under out_dir.
// Fails if out_dir is non-empty unless force is set.
void generate_dataset(const std::vector<DomainSpec>& specs, uint64_t seed, const std::string& out_dir,
                      bool force = false, int side = 64);

// Balanced seeded draw of K train-sample ids (ceil(K/2) abnormal).
std::vector<std::string> sample_few_shot(const LoadedDomain& domain, int k, uint64_t seed);

}  // namespace iqe
