#include "ovod/persistence.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace ovod {

using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path);
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << contents;
    out.flush();
    if (!out) throw IoError("cannot write " + path);
}

namespace {

json features_json(const FeatureVector& f) { return json(std::vector<double>(f.begin(), f.end())); }

FeatureVector features_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(kFeatureDim)) throw ValidationError("feature vector must have 20 entries");
    FeatureVector f{};
    std::copy(v.begin(), v.end(), f.begin());
    return f;
}

json step_json(const TrajectoryStep& s) {
    return json{{"state_from", s.z_from.state.value()},
                {"action", action_label(s.action)},
                {"state_to", s.z_to.state.value()},
                {"features_from", features_json(s.z_from.features)},
                {"features_to", features_json(s.z_to.features)},
                {"reward", s.reward},
                {"diagnostics",
                 {{"max_score_before", s.diagnostics.max_score_before},
                  {"max_score_after", s.diagnostics.max_score_after},
                  {"entropy_before", s.diagnostics.entropy_before},
                  {"entropy_after", s.diagnostics.entropy_after}}}};
}

ActionId parse_action_label(const std::string& label) {
    for (ActionId a : kAllActions)
        if (action_label(a) == label) return a;
    throw ValidationError("unknown action '" + label + "'");
}

TrajectoryStep step_from(const json& j) {
    TrajectoryStep s;
    s.z_from = {StateId(j.at("state_from").get<int>()), features_from(j.at("features_from"))};
    s.action = parse_action_label(j.at("action").get<std::string>());
    s.z_to = {StateId(j.at("state_to").get<int>()), features_from(j.at("features_to"))};
    s.reward = j.at("reward").get<double>();
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        s.diagnostics = {d.at("max_score_before").get<double>(), d.at("max_score_after").get<double>(),
                         d.at("entropy_before").get<double>(), d.at("entropy_after").get<double>()};
    }
    s.validate();
    return s;
}

}  // namespace

json record_to_json(const ImageRecord& r) {
    json trajs = json::array();
    json aborted = json::array();
    for (const auto& t : r.trajectories) {
        json steps = json::array();
        for (const auto& s : t.steps) steps.push_back(step_json(s));
        trajs.push_back(std::move(steps));
        aborted.push_back(t.aborted);
    }
    json post = json::array();
    for (const auto& row : r.transition_posterior) post.push_back(std::vector<double>(row.begin(), row.end()));
    return json{{"version", kDatasetVersion},
                {"image_id", r.image_id},
                {"trajectories", std::move(trajs)},
                {"aborted", std::move(aborted)},
                {"posterior", std::move(post)}};
}

ImageRecord record_from_json(const json& j) {
    const int version = j.at("version").get<int>();
    if (version != kDatasetVersion)
        throw ValidationError("unsupported dataset version " + std::to_string(version));
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    const auto& trajs = j.at("trajectories");
    const json aborted = j.value("aborted", json::array());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        Trajectory t;
        for (const auto& s : trajs.at(i)) t.steps.push_back(step_from(s));
        t.aborted = i < aborted.size() && aborted.at(i).get<bool>();
        r.trajectories.push_back(std::move(t));
    }
    const auto& post = j.at("posterior");
    if (post.size() != static_cast<std::size_t>(kStateCount)) throw ValidationError("posterior must be 8x8");
    for (int i = 0; i < kStateCount; ++i) {
        const auto row = post.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(kStateCount)) throw ValidationError("posterior must be 8x8");
        std::copy(row.begin(), row.end(), r.transition_posterior[static_cast<std::size_t>(i)].begin());
    }
    r.validate();
    return r;
}

std::string dataset_to_jsonl(std::span<const ImageRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

namespace {

template <class T, class Parse>
std::vector<T> parse_jsonl(std::istream& in, Parse parse) {
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse(json::parse(line)));
        } catch (const std::exception& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<ImageRecord> dataset_from_jsonl(std::istream& in) {
    return parse_jsonl<ImageRecord>(in, [](const json& j) { return record_from_json(j); });
}

void save_dataset(const std::string& path, std::span<const ImageRecord> records) {
    write_file(path, dataset_to_jsonl(records));
}

std::vector<ImageRecord> load_dataset(const std::string& path) {
    std::istringstream in(read_file(path));
    return dataset_from_jsonl(in);
}

json scene_to_json(const SceneSpec& s) {
    return json{{"image_id", s.image_id},
                {"noun", s.noun},
                {"width", s.width},
                {"height", s.height},
                {"true_color", s.true_color},
                {"true_texture", s.true_texture},
                {"true_geometry", s.true_geometry},
                {"true_lighting", s.true_lighting},
                {"true_position", s.true_position},
                {"background_clutter", s.background_clutter},
                {"gt_box", {s.gt_box.x_min, s.gt_box.y_min, s.gt_box.x_max, s.gt_box.y_max}},
                {"seed", s.seed}};
}

SceneSpec scene_from_json(const json& j) {
    SceneSpec s;
    s.image_id = j.at("image_id").get<std::string>();
    s.noun = j.at("noun").get<std::string>();
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.true_color = j.at("true_color").get<std::string>();
    s.true_texture = j.at("true_texture").get<std::string>();
    s.true_geometry = j.at("true_geometry").get<std::string>();
    s.true_lighting = j.at("true_lighting").get<std::string>();
    s.true_position = j.at("true_position").get<std::string>();
    s.background_clutter = j.at("background_clutter").get<double>();
    const auto box = j.at("gt_box").get<std::vector<double>>();
    if (box.size() != 4) throw ValidationError("gt_box needs four coordinates");
    s.gt_box = {box[0], box[1], box[2], box[3]};
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
}

std::vector<SceneSpec> scenes_from_jsonl(std::istream& in) {
    return parse_jsonl<SceneSpec>(in, [](const json& j) { return scene_from_json(j); });
}

void save_scenes(const std::string& path, std::span<const SceneSpec> scenes) {
    std::string out;
    for (const auto& s : scenes) {
        out += scene_to_json(s).dump();
        out += '\n';
    }
    write_file(path, out);
}

std::vector<SceneSpec> load_scenes(const std::string& path) {
    std::istringstream in(read_file(path));
    return scenes_from_jsonl(in);
}

std::string encode_ppm(const RasterImage& img, bool binary) {
    std::string out = (binary ? "P6\n" : "P3\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n255\n";
    if (binary) {
        out.reserve(out.size() + img.pixels().size() * 3);
        for (const auto& p : img.pixels()) {
            out.push_back(static_cast<char>(p.r));
            out.push_back(static_cast<char>(p.g));
            out.push_back(static_cast<char>(p.b));
        }
        return out;
    }
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const auto& p = img.at(x, y);
            if (x) out += "  ";
            out += std::to_string(p.r) + " " + std::to_string(p.g) + " " + std::to_string(p.b);
        }
        out += '\n';
    }
    return out;
}

namespace {

class PpmReader {
public:
    explicit PpmReader(const std::string& b) : bytes_(b) {}

    std::string token() {
        skip_space();
        std::string t;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) t += bytes_[pos_++];
        if (t.empty()) throw ValidationError("ppm: unexpected end of data");
        return t;
    }

    int integer() {
        const std::string t = token();
        if (t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9)
            throw ValidationError("ppm: bad integer '" + t + "'");
        return std::stoi(t);
    }

    std::size_t& pos() { return pos_; }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

RasterImage decode_ppm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '3' && bytes[1] != '6'))
        throw ValidationError("ppm: unsupported format (only P3/P6)");
    const bool binary = bytes[1] == '6';
    PpmReader rd(bytes);
    rd.pos() = 2;
    const int w = rd.integer();
    const int h = rd.integer();
    const int maxval = rd.integer();
    if (maxval != 255) throw ValidationError("ppm: unsupported maxval " + std::to_string(maxval));
    if (w < 1 || h < 1) throw ValidationError("ppm: empty image");
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<Rgb> px(n);
    if (binary) {
        std::size_t p = rd.pos() + 1;  // exactly one whitespace byte after maxval
        if (p + 3 * n > bytes.size()) throw ValidationError("ppm: truncated pixel data");
        for (std::size_t i = 0; i < n; ++i, p += 3)
            px[i] = {static_cast<std::uint8_t>(bytes[p]), static_cast<std::uint8_t>(bytes[p + 1]),
                     static_cast<std::uint8_t>(bytes[p + 2])};
    } else {
        for (auto& p : px) {
            int c[3];
            for (int& v : c) {
                v = rd.integer();
                if (v > 255) throw ValidationError("ppm: sample exceeds maxval");
            }
            p = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]), static_cast<std::uint8_t>(c[2])};
        }
    }
    return RasterImage(w, h, std::move(px));
}

void save_ppm(const std::string& path, const RasterImage& img, bool binary) {
    write_file(path, encode_ppm(img, binary));
}

RasterImage load_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

}  // namespace ovod
