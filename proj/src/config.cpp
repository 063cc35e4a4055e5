#include "sdseg/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace sdseg {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (!working.valid()) throw ConfigError("config: invalid working resolution");
    if (objectness != "builtin" && objectness != "precomputed")
        throw ConfigError("config: objectness must be 'builtin' or 'precomputed'");
    if (location != "video_mean" && location != "gaussian")
        throw ConfigError("config: location must be 'video_mean' or 'gaussian'");
    if (extractor != "colortex" && extractor != "vgg16")
        throw ConfigError("config: extractor must be 'colortex' or 'vgg16'");
    if (otsu_bins < 2) throw ConfigError("config: otsu_bins must be >= 2");
    if (n_folds < 2) throw ConfigError("config: n_folds must be >= 2");
    train.validate();
}

std::string to_json_string(const PipelineConfig& c) {
    json j;
    j["dataset_root"] = c.dataset_root;
    j["working_resolution"] = {{"height", c.working.height}, {"width", c.working.width}};
    j["cues"] = {{"objectness", c.objectness},
                 {"objectness_dir", c.objectness_dir},
                 {"window_fracs", c.objectness_params.window_fracs},
                 {"window_stride_frac", c.objectness_params.stride_frac},
                 {"location", c.location},
                 {"gaussian_sigma_frac", c.gaussian_sigma_frac}};
    j["features"] = {{"extractor", c.extractor}, {"vgg_weights", c.vgg_weights}};
    std::vector<std::string> terms;
    if (c.train.terms.anchor) terms.push_back("anchor");
    if (c.train.terms.dif_fg) terms.push_back("dif_fg");
    if (c.train.terms.dif_bg) terms.push_back("dif_bg");
    j["train"] = {{"margin_fg", c.train.margins.m_fg},
                  {"margin_bg", c.train.margins.m_bg},
                  {"pair_stride", c.train.pair_stride},
                  {"pairing", c.train.pairing == PairingMode::adjacent ? "adjacent" : "random"},
                  {"batch_pairs", c.train.batch_pairs},
                  {"epochs", c.train.epochs},
                  {"learning_rate", c.train.learning_rate},
                  {"supervision", static_cast<int>(c.train.supervision)},
                  {"setting", to_string(c.train.setting)},
                  {"loss_terms", terms},
                  {"net",
                   {{"in_channels", c.train.net.in_channels},
                    {"depth", c.train.net.depth},
                    {"base_width", c.train.net.base_width}}},
                  {"pairs_per_epoch", c.train.pairs_per_epoch},
                  {"num_workers", c.train.num_workers}};
    j["eval"] = {{"otsu_bins", c.otsu_bins},
                 {"score_anchors", c.score_anchors},
                 {"n_folds", c.n_folds},
                 {"write_overlays", c.write_overlays}};
    j["output_dir"] = c.output_dir;
    j["cue_cache_dir"] = c.cue_cache_dir;
    j["seed"] = c.seed;
    return j.dump(2);
}

PipelineConfig config_from_json_string(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: invalid JSON");
    PipelineConfig c;
    c.dataset_root = j.value("dataset_root", c.dataset_root);
    if (j.contains("working_resolution")) {
        c.working.height = j["working_resolution"].value("height", c.working.height);
        c.working.width = j["working_resolution"].value("width", c.working.width);
    }
    if (j.contains("cues")) {
        const auto& q = j["cues"];
        c.objectness = q.value("objectness", c.objectness);
        c.objectness_dir = q.value("objectness_dir", c.objectness_dir);
        if (q.contains("window_fracs"))
            c.objectness_params.window_fracs = q["window_fracs"].get<std::vector<float>>();
        c.objectness_params.stride_frac =
            q.value("window_stride_frac", c.objectness_params.stride_frac);
        c.location = q.value("location", c.location);
        c.gaussian_sigma_frac = q.value("gaussian_sigma_frac", c.gaussian_sigma_frac);
    }
    if (j.contains("features")) {
        c.extractor = j["features"].value("extractor", c.extractor);
        c.vgg_weights = j["features"].value("vgg_weights", c.vgg_weights);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        c.train.margins.m_fg = t.value("margin_fg", c.train.margins.m_fg);
        c.train.margins.m_bg = t.value("margin_bg", c.train.margins.m_bg);
        c.train.pair_stride = t.value("pair_stride", c.train.pair_stride);
        const std::string pairing = t.value("pairing", std::string("adjacent"));
        if (pairing == "adjacent") c.train.pairing = PairingMode::adjacent;
        else if (pairing == "random") c.train.pairing = PairingMode::random_pairs;
        else throw ConfigError("config: pairing must be 'adjacent' or 'random'");
        c.train.batch_pairs = t.value("batch_pairs", c.train.batch_pairs);
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        const int sup = t.value("supervision", 0);
        if (sup != 0 && sup != 50 && sup != 100)
            throw ConfigError("config: supervision must be 0, 50 or 100");
        c.train.supervision = static_cast<Supervision>(sup);
        const std::string setting = t.value("setting", std::string("ss"));
        if (setting == "ss") c.train.setting = Setting::SS;
        else if (setting == "tt") c.train.setting = Setting::TT;
        else throw ConfigError("config: setting must be 'ss' or 'tt'");
        if (t.contains("loss_terms")) {
            c.train.terms = LossTerms{false, false, false};
            for (const auto& s : t["loss_terms"]) {
                const std::string name = s.get<std::string>();
                if (name == "anchor") c.train.terms.anchor = true;
                else if (name == "dif_fg") c.train.terms.dif_fg = true;
                else if (name == "dif_bg") c.train.terms.dif_bg = true;
                else throw ConfigError("config: unknown loss term '" + name + "'");
            }
        }
        if (t.contains("net")) {
            c.train.net.in_channels = t["net"].value("in_channels", c.train.net.in_channels);
            c.train.net.depth = t["net"].value("depth", c.train.net.depth);
            c.train.net.base_width = t["net"].value("base_width", c.train.net.base_width);
        }
        c.train.pairs_per_epoch = t.value("pairs_per_epoch", c.train.pairs_per_epoch);
        c.train.num_workers = t.value("num_workers", c.train.num_workers);
    }
    if (j.contains("eval")) {
        c.otsu_bins = j["eval"].value("otsu_bins", c.otsu_bins);
        c.score_anchors = j["eval"].value("score_anchors", c.score_anchors);
        c.n_folds = j["eval"].value("n_folds", c.n_folds);
        c.write_overlays = j["eval"].value("write_overlays", c.write_overlays);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.cue_cache_dir = j.value("cue_cache_dir", c.cue_cache_dir);
    c.seed = j.value("seed", c.seed);
    c.train.seed = c.seed;
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_string(text);
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config file: " + path.string());
    out << to_json_string(config) << "\n";
}

} // namespace sdseg
