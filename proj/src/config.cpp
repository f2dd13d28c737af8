#include "cfrep/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cfrep/errors.hpp"

namespace cfrep {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("'" + v + "' is not a number");
    return out;
}

std::uint64_t parse_uint(const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("'" + v + "' is not a non-negative integer");
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError("'" + v + "' is not a boolean (true/false)");
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Shortest decimal text that parses back to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename Seq>
std::string join(const Seq& items) {
    std::string out;
    for (const auto& it : items) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_same_v<std::decay_t<decltype(it)>, std::string>) {
            out += it;
        } else {
            out += std::to_string(it);
        }
    }
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.kind", [](RunConfig& c, const std::string& v) { c.data.kind = parse_dataset_kind(v); }},
        {"data.n", [](RunConfig& c, const std::string& v) { c.data.n = parse_uint(v); }},
        {"data.seed", [](RunConfig& c, const std::string& v) { c.data.seed = parse_uint(v); }},
        {"data.labeled_fraction",
         [](RunConfig& c, const std::string& v) { c.data.labeled_fraction = parse_double(v); }},
        {"train.eta", [](RunConfig& c, const std::string& v) { c.train.eta = parse_double(v); }},
        {"train.lambda", [](RunConfig& c, const std::string& v) { c.train.lambda = parse_double(v); }},
        {"train.latent_dim", [](RunConfig& c, const std::string& v) { c.train.latent_dim = parse_uint(v); }},
        {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_uint(v); }},
        {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_uint(v); }},
        {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_double(v); }},
        {"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint(v); }},
        {"train.target", [](RunConfig& c, const std::string& v) { c.train.target = v; }},
        {"train.confounders", [](RunConfig& c, const std::string& v) { c.train.confounders = parse_list(v); }},
        {"train.ssl", [](RunConfig& c, const std::string& v) { c.train.ssl = parse_bool(v); }},
        {"train.ncc", [](RunConfig& c, const std::string& v) { c.train.ncc = parse_bool(v); }},
        {"train.folds", [](RunConfig& c, const std::string& v) { c.train.folds = parse_uint(v); }},
        {"train.predictor", [](RunConfig& c, const std::string& v) { c.train.predictor = parse_predictor_kind(v); }},
        {"train.channels",
         [](RunConfig& c, const std::string& v) {
             c.train.channels.clear();
             for (const auto& item : parse_list(v)) c.train.channels.push_back(parse_uint(item));
         }},
        {"train.eta_warmup", [](RunConfig& c, const std::string& v) { c.train.eta_warmup = parse_uint(v); }},
        {"train.lr_schedule",
         [](RunConfig& c, const std::string& v) { c.train.lr_schedule = parse_lr_schedule(v); }},
        {"viz.frames", [](RunConfig& c, const std::string& v) { c.viz.frames = parse_uint(v); }},
        {"viz.range", [](RunConfig& c, const std::string& v) { c.viz.range = parse_range_policy(v); }},
        {"viz.lo", [](RunConfig& c, const std::string& v) { c.viz.lo = parse_double(v); }},
        {"viz.hi", [](RunConfig& c, const std::string& v) { c.viz.hi = parse_double(v); }},
    };
    return table;
}

void assign(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
            const std::string& where) {
    const auto it = setters().find(section + "." + key);
    if (it == setters().end()) {
        throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
    }
    try {
        it->second(cfg, value);
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": key '" + key + "': " + e.what());
    }
}

}  // namespace

std::string to_string(RangePolicy policy) {
    switch (policy) {
        case RangePolicy::mean_1sd: return "mean1sd";
        case RangePolicy::mean_3sd: return "mean3sd";
        case RangePolicy::explicit_range: return "explicit";
    }
    return "unknown";
}

RangePolicy parse_range_policy(const std::string& name) {
    if (name == "mean1sd") return RangePolicy::mean_1sd;
    if (name == "mean3sd") return RangePolicy::mean_3sd;
    if (name == "explicit") return RangePolicy::explicit_range;
    throw ConfigError("unknown range policy '" + name + "' (expected mean1sd, mean3sd or explicit)");
}

void RunConfig::validate() const {
    if (data.n == 0) throw ConfigError("data.n must be at least 1");
    if (!(data.labeled_fraction >= 0.0 && data.labeled_fraction <= 1.0)) {
        throw ConfigError("data.labeled_fraction must lie in [0, 1]");
    }
    train.validate();
    if (viz.frames == 0) throw ConfigError("viz.frames must be at least 1");
    if (viz.range == RangePolicy::explicit_range && !(viz.lo < viz.hi)) {
        throw ConfigError("viz.lo must be below viz.hi for an explicit range");
    }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "train" && section != "viz") {
                throw ConfigError(where + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        if (section.empty()) throw ConfigError(where + ": key outside of a section");
        assign(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    assign(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
           trim(assignment.substr(eq + 1)), "override");
}

std::string echo_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[data]\n"
       << "kind = " << to_string(c.data.kind) << '\n'
       << "n = " << c.data.n << '\n'
       << "seed = " << c.data.seed << '\n'
       << "labeled_fraction = " << format_double(c.data.labeled_fraction) << "\n\n"
       << "[train]\n"
       << "eta = " << format_double(c.train.eta) << '\n'
       << "lambda = " << format_double(c.train.lambda) << '\n'
       << "latent_dim = " << c.train.latent_dim << '\n'
       << "batch_size = " << c.train.batch_size << '\n'
       << "epochs = " << c.train.epochs << '\n'
       << "learning_rate = " << format_double(c.train.learning_rate) << '\n'
       << "seed = " << c.train.seed << '\n'
       << "target = " << c.train.target << '\n'
       << "confounders = " << join(c.train.confounders) << '\n'
       << "ssl = " << (c.train.ssl ? "true" : "false") << '\n'
       << "ncc = " << (c.train.ncc ? "true" : "false") << '\n'
       << "folds = " << c.train.folds << '\n'
       << "predictor = " << to_string(c.train.predictor) << '\n'
       << "channels = " << join(c.train.channels) << '\n'
       << "eta_warmup = " << c.train.eta_warmup << '\n'
       << "lr_schedule = " << to_string(c.train.lr_schedule) << "\n\n"
       << "[viz]\n"
       << "frames = " << c.viz.frames << '\n'
       << "range = " << to_string(c.viz.range) << '\n'
       << "lo = " << format_double(c.viz.lo) << '\n'
       << "hi = " << format_double(c.viz.hi) << '\n';
    return os.str();
}

}  // namespace cfrep
