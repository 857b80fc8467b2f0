#include "bnn/config.hpp"

#include "serial.hpp"

#include <fstream>
#include <sstream>

namespace bnn {

const char* to_string(Decomposition d) {
    switch (d) {
        case Decomposition::None: return "none";
        case Decomposition::Svd: return "svd";
        case Decomposition::Tucker: return "tucker";
        case Decomposition::Holistic: return "holistic";
    }
    return "?";
}

const char* to_string(ScaleMode m) {
    return m == ScaleMode::AnalyticPerFilter ? "analytic" : "learned";
}

const char* to_string(OptimKind k) { return k == OptimKind::Adam ? "adam" : "rmsprop"; }

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

static std::vector<std::pair<int64_t, double>> parse_drops(const std::string& text,
                                                           const std::string& key) {
    std::vector<std::pair<int64_t, double>> drops;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError(key + ": expected epoch:multiplier entries, got '" + item + "'");
        drops.emplace_back(std::stoll(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    }
    return drops;
}

static bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "train" && section != "data" && section != "out")
                throw ConfigError("unknown section [" + section + "] on line " +
                                  std::to_string(line_no));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value on line " + std::to_string(line_no));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        std::string qual = section + "." + key;

        try {
            if (qual == "model.decomposition") {
                if (value == "none") cfg.decomp = Decomposition::None;
                else if (value == "svd") cfg.decomp = Decomposition::Svd;
                else if (value == "tucker") cfg.decomp = Decomposition::Tucker;
                else if (value == "holistic") cfg.decomp = Decomposition::Holistic;
                else throw ConfigError("model.decomposition: unknown value '" + value + "'");
            } else if (qual == "model.scale") {
                if (value == "analytic") cfg.scale = ScaleMode::AnalyticPerFilter;
                else if (value == "learned") cfg.scale = ScaleMode::LearnedPerFilter;
                else throw ConfigError("model.scale: unknown value '" + value + "'");
            } else if (qual == "model.svd_rank") {
                cfg.svd_rank = std::stoll(value);
            } else if (qual == "train.epochs") {
                cfg.epochs = std::stoll(value);
            } else if (qual == "train.batch") {
                cfg.batch = std::stoll(value);
            } else if (qual == "train.seed") {
                cfg.seed = std::stoull(value);
            } else if (qual == "train.optimizer") {
                if (value == "adam") cfg.optimizer = OptimKind::Adam;
                else if (value == "rmsprop") cfg.optimizer = OptimKind::RmsProp;
                else throw ConfigError("train.optimizer: unknown value '" + value + "'");
            } else if (qual == "train.lr") {
                cfg.lr = std::stod(value);
            } else if (qual == "train.lr_drops") {
                cfg.lr_drops = parse_drops(value, qual);
            } else if (qual == "train.weight_decay") {
                cfg.weight_decay = std::stod(value);
            } else if (qual == "train.augment_flip") {
                cfg.augment_flip = parse_bool(value, qual);
            } else if (qual == "train.augment_shift") {
                cfg.augment_shift = std::stoll(value);
            } else if (qual == "data.synthetic") {
                cfg.synthetic = parse_bool(value, qual);
            } else if (qual == "data.synth_train") {
                cfg.synth_train = std::stoll(value);
            } else if (qual == "data.synth_test") {
                cfg.synth_test = std::stoll(value);
            } else if (qual == "data.format") {
                if (value != "idx" && value != "csv")
                    throw ConfigError("data.format: expected idx or csv");
                cfg.format = value;
            } else if (qual == "data.train_images") {
                cfg.train_images = value;
            } else if (qual == "data.train_labels") {
                cfg.train_labels = value;
            } else if (qual == "data.test_images") {
                cfg.test_images = value;
            } else if (qual == "data.test_labels") {
                cfg.test_labels = value;
            } else if (qual == "data.train_csv") {
                cfg.train_csv = value;
            } else if (qual == "data.test_csv") {
                cfg.test_csv = value;
            } else if (qual == "out.dir") {
                cfg.out_dir = value;
            } else {
                throw ConfigError("unknown key '" + qual + "' on line " + std::to_string(line_no));
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(qual + ": cannot parse '" + value + "' (" + e.what() + ")");
        }
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[model]\n";
    os << "decomposition = " << to_string(cfg.decomp) << "\n";
    os << "scale = " << to_string(cfg.scale) << "\n";
    os << "svd_rank = " << cfg.svd_rank << "\n";
    os << "[train]\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch = " << cfg.batch << "\n";
    if (cfg.seed) os << "seed = " << *cfg.seed << "\n";
    os << "optimizer = " << to_string(cfg.optimizer) << "\n";
    os << "lr = " << cfg.lr << "\n";
    if (!cfg.lr_drops.empty()) {
        os << "lr_drops = ";
        for (size_t i = 0; i < cfg.lr_drops.size(); ++i) {
            if (i) os << ",";
            os << cfg.lr_drops[i].first << ":" << cfg.lr_drops[i].second;
        }
        os << "\n";
    }
    os << "weight_decay = " << cfg.weight_decay << "\n";
    os << "augment_flip = " << (cfg.augment_flip ? "true" : "false") << "\n";
    os << "augment_shift = " << cfg.augment_shift << "\n";
    os << "[data]\n";
    os << "synthetic = " << (cfg.synthetic ? "true" : "false") << "\n";
    os << "synth_train = " << cfg.synth_train << "\n";
    os << "synth_test = " << cfg.synth_test << "\n";
    os << "format = " << cfg.format << "\n";
    if (!cfg.train_images.empty()) os << "train_images = " << cfg.train_images << "\n";
    if (!cfg.train_labels.empty()) os << "train_labels = " << cfg.train_labels << "\n";
    if (!cfg.test_images.empty()) os << "test_images = " << cfg.test_images << "\n";
    if (!cfg.test_labels.empty()) os << "test_labels = " << cfg.test_labels << "\n";
    if (!cfg.train_csv.empty()) os << "train_csv = " << cfg.train_csv << "\n";
    if (!cfg.test_csv.empty()) os << "test_csv = " << cfg.test_csv << "\n";
    os << "[out]\n";
    os << "dir = " << cfg.out_dir << "\n";
    return os.str();
}

uint64_t config_hash(const ExperimentConfig& cfg) { return serial::fnv1a(config_to_text(cfg)); }

}  // namespace bnn
