#include "iqe/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace iqe {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

// Shortest representation that round-trips exactly.
std::string fmt_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (image_size <= 0 || patch <= 0 || image_size % patch != 0)
        fail("image_size must be a positive multiple of patch");
    if (C <= 0 || C % 2 != 0) fail("C must be positive and even");
    if (heads <= 0 || C % heads != 0) fail("heads must divide C");
    if (img_layers <= 0 || img_layers % 4 != 0) fail("img_layers must be a positive multiple of 4");
    if (txt_layers <= 0) fail("txt_layers must be positive");
    if (D < 0 || D >= txt_layers) fail("D must be below txt_layers");
    if (M <= 0 || r <= 0) fail("M and r must be positive");
    if (context_cap < r + 8) fail("context_cap too small for the prompt template");
    if (map_alpha < 0 || map_alpha > 1) fail("map_alpha outside [0,1]");
    if (loss_alpha < 0 || loss_alpha > 1) fail("loss_alpha outside [0,1]");
    if (epochs <= 0 || batch <= 0 || adapt_epochs < 0) fail("epochs/batch/adapt_epochs out of range");
    if (lr <= 0) fail("lr must be positive");
    if (focal_gamma < 0 || focal_balance < 0 || focal_balance > 1) fail("focal parameters out of range");
    if (dice_eps <= 0) fail("dice_eps must be positive");
    if (few_shot_mode != "finetune" && few_shot_mode != "joint")
        fail("few_shot_mode must be finetune or joint");
    if (!disable_iqm && iqm_blocks != 4)
        fail("iqm_blocks must equal the four feature stages while the query module is active");
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "seed") cfg.seed = parse_u64(key, val);
        else if (key == "backbone_seed") cfg.backbone_seed = parse_u64(key, val);
        else if (key == "image_size") cfg.image_size = parse_int(key, val);
        else if (key == "patch") cfg.patch = parse_int(key, val);
        else if (key == "C") cfg.C = parse_int(key, val);
        else if (key == "heads") cfg.heads = parse_int(key, val);
        else if (key == "img_layers") cfg.img_layers = parse_int(key, val);
        else if (key == "txt_layers") cfg.txt_layers = parse_int(key, val);
        else if (key == "iqm_blocks") cfg.iqm_blocks = parse_int(key, val);
        else if (key == "r") cfg.r = parse_int(key, val);
        else if (key == "M") cfg.M = parse_int(key, val);
        else if (key == "D") cfg.D = parse_int(key, val);
        else if (key == "context_cap") cfg.context_cap = parse_int(key, val);
        else if (key == "map_alpha") cfg.map_alpha = parse_double(key, val);
        else if (key == "loss_alpha") cfg.loss_alpha = parse_double(key, val);
        else if (key == "epochs") cfg.epochs = parse_int(key, val);
        else if (key == "batch") cfg.batch = parse_int(key, val);
        else if (key == "lr") cfg.lr = parse_double(key, val);
        else if (key == "adapt_epochs") cfg.adapt_epochs = parse_int(key, val);
        else if (key == "focal_gamma") cfg.focal_gamma = parse_double(key, val);
        else if (key == "focal_balance") cfg.focal_balance = parse_double(key, val);
        else if (key == "dice_eps") cfg.dice_eps = parse_double(key, val);
        else if (key == "few_shot_mode") cfg.few_shot_mode = val;
        else if (key == "disable_cpt") cfg.disable_cpt = parse_bool(key, val);
        else if (key == "disable_lpt") cfg.disable_lpt = parse_bool(key, val);
        else if (key == "disable_iqm") cfg.disable_iqm = parse_bool(key, val);
        else if (key == "disable_query_init") cfg.disable_query_init = parse_bool(key, val);
        else if (key == "disable_text_xattn") cfg.disable_text_xattn = parse_bool(key, val);
        else if (key == "disable_image_xattn") cfg.disable_image_xattn = parse_bool(key, val);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::dump() const {
    std::ostringstream out;
    out << "seed = " << seed << "\n";
    out << "backbone_seed = " << backbone_seed << "\n";
    out << "image_size = " << image_size << "\n";
    out << "patch = " << patch << "\n";
    out << "C = " << C << "\n";
    out << "heads = " << heads << "\n";
    out << "img_layers = " << img_layers << "\n";
    out << "txt_layers = " << txt_layers << "\n";
    out << "iqm_blocks = " << iqm_blocks << "\n";
    out << "r = " << r << "\n";
    out << "M = " << M << "\n";
    out << "D = " << D << "\n";
    out << "context_cap = " << context_cap << "\n";
    out << "map_alpha = " << fmt_double(map_alpha) << "\n";
    out << "loss_alpha = " << fmt_double(loss_alpha) << "\n";
    out << "epochs = " << epochs << "\n";
    out << "batch = " << batch << "\n";
    out << "lr = " << fmt_double(lr) << "\n";
    out << "adapt_epochs = " << adapt_epochs << "\n";
    out << "focal_gamma = " << fmt_double(focal_gamma) << "\n";
    out << "focal_balance = " << fmt_double(focal_balance) << "\n";
    out << "dice_eps = " << fmt_double(dice_eps) << "\n";
    out << "few_shot_mode = " << few_shot_mode << "\n";
    out << "disable_cpt = " << (disable_cpt ? 1 : 0) << "\n";
    out << "disable_lpt = " << (disable_lpt ? 1 : 0) << "\n";
    out << "disable_iqm = " << (disable_iqm ? 1 : 0) << "\n";
    out << "disable_query_init = " << (disable_query_init ? 1 : 0) << "\n";
    out << "disable_text_xattn = " << (disable_text_xattn ? 1 : 0) << "\n";
    out << "disable_image_xattn = " << (disable_image_xattn ? 1 : 0) << "\n";
    return out.str();
}

}  // namespace iqe
