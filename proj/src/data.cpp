#include "iqe/data.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace iqe {

namespace {

// Next PGM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back((char)c);
            while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok.push_back((char)in.get());
            return tok;
        }
    }
    return tok;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image: " + path);
    if (next_token(in) != "P5") throw std::runtime_error("not a binary PGM (P5): " + path);
    PgmImage img;
    int maxval = 0;
    try {
        img.width = std::stoi(next_token(in));
        img.height = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (...) {
        throw std::runtime_error("malformed PGM header: " + path);
    }
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("unsupported PGM geometry in " + path);
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw((size_t)img.width * img.height);
    in.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)raw.size());
    if ((size_t)in.gcount() != raw.size()) throw std::runtime_error("truncated PGM data: " + path);
    img.pixels.resize(raw.size());
    const float inv = 1.0f / (float)maxval;
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = (float)raw[i] * inv;
    return img;
}

void write_pgm(const std::string& path, int width, int height, const float* values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> raw((size_t)width * height);
    for (size_t i = 0; i < raw.size(); ++i) {
        float v = std::min(1.0f, std::max(0.0f, values[i]));
        raw[i] = (unsigned char)std::lround(v * 255.0f);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), (std::streamsize)raw.size());
    if (!out) throw std::runtime_error("short write: " + path);
}

Tensor pgm_to_tensor(const PgmImage& img) {
    return Tensor({img.height, img.width}, img.pixels);
}

void write_manifest(const std::string& path, const DomainManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << m.domain << "\t" << m.class_word << "\n";
    for (const auto& e : m.entries)
        out << e.id << "\t" << e.split << "\t" << e.label << "\t" << e.image_path << "\t" << e.mask_path
            << "\n";
}

DomainManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    DomainManifest m;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
    auto head = split_tabs(line);
    if (head.size() != 2) throw std::runtime_error("malformed manifest header: " + path);
    m.domain = head[0];
    m.class_word = head[1];
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() != 5) throw std::runtime_error("malformed manifest row in " + path + ": " + line);
        ManifestEntry e;
        e.id = f[0];
        e.split = f[1];
        e.label = std::stoi(f[2]);
        e.image_path = f[3];
        e.mask_path = f[4];
        if (e.split != "train" && e.split != "test")
            throw std::runtime_error("manifest split must be train or test: " + line);
        m.entries.push_back(std::move(e));
    }
    return m;
}

const LoadedDomain* Dataset::find(const std::string& name) const {
    for (const auto& d : domains)
        if (d.name == name) return &d;
    return nullptr;
}

Dataset load_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("dataset root is not a directory: " + root);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.tsv"))
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error("no domain manifests under " + root);

    Dataset ds;
    for (const auto& name : names) {
        auto manifest = read_manifest((fs::path(root) / name / "manifest.tsv").string());
        LoadedDomain dom;
        dom.name = manifest.domain;
        dom.class_word = manifest.class_word;
        for (const auto& e : manifest.entries) {
            LoadedSample s;
            s.id = e.id;
            s.label = e.label;
            s.image = pgm_to_tensor(read_pgm((fs::path(root) / e.image_path).string()));
            if (e.mask_path != "-") {
                auto m = read_pgm((fs::path(root) / e.mask_path).string());
                Tensor mask({m.height, m.width});
                for (size_t i = 0; i < m.pixels.size(); ++i)
                    mask.values()[i] = m.pixels[i] > 0.5f ? 1.0f : 0.0f;
                s.mask = mask;
                s.has_mask = true;
                if (s.label == 0) {
                    for (float v : s.mask.values())
                        if (v > 0) throw std::runtime_error("normal sample with positive mask: " + e.id);
                } else {
                    bool any = false;
                    for (float v : s.mask.values()) any = any || v > 0;
                    if (!any) throw std::runtime_error("abnormal sample with empty mask: " + e.id);
                }
            }
            (e.split == "train" ? dom.train : dom.test).push_back(std::move(s));
        }
        ds.domains.push_back(std::move(dom));
    }
    return ds;
}

}  // namespace iqe
