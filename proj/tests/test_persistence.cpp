#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "ovod/persistence.hpp"
#include "ovod/pipeline.hpp"
#include "support.hpp"

using namespace ovod;

namespace {

std::vector<ImageRecord> small_dataset() {
    std::vector<SceneSpec> scenes = {testing::base_spec("a"), testing::base_spec("b")};
    scenes[1].true_color = "blue";
    SamplerConfig cfg;
    cfg.seed = 2;
    return sample_scenes(scenes, testing::shipped_lexicon(), cfg);
}

}  // namespace

TEST_CASE("dataset round trip") {
    const auto data = small_dataset();
    const auto text = dataset_to_jsonl(data);
    std::istringstream in(text);
    const auto back = dataset_from_jsonl(in);
    CHECK(back == data);
    CHECK(dataset_to_jsonl(back) == text);

    const auto dir = testing::scratch_dir("dataset");
    const auto path = (dir / "d.jsonl").string();
    save_dataset(path, data);
    CHECK(load_dataset(path) == data);
    std::filesystem::remove_all(dir);
}

TEST_CASE("dataset edge cases") {
    std::istringstream empty("");
    CHECK(dataset_from_jsonl(empty).empty());
    std::istringstream blanks("\n\n");
    CHECK(dataset_from_jsonl(blanks).empty());

    const auto text = dataset_to_jsonl(small_dataset());
    const auto first_end = text.find('\n');
    std::istringstream truncated(text.substr(0, first_end + 1) + text.substr(first_end + 1, 40) + "\n");
    try {
        dataset_from_jsonl(truncated);
        FAIL("expected a parse error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    auto j = record_to_json(small_dataset()[0]);
    j["version"] = kDatasetVersion + 1;
    std::istringstream future(j.dump() + "\n");
    CHECK_THROWS_AS(dataset_from_jsonl(future), ValidationError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/d.jsonl"), IoError);
}

TEST_CASE("scene specs round trip") {
    const auto scenes = make_scenes(25, 4, {"apricot", "mug"});
    const auto dir = testing::scratch_dir("scenes");
    const auto path = (dir / "s.jsonl").string();
    save_scenes(path, scenes);
    CHECK(load_scenes(path) == scenes);
    for (const auto& s : scenes) CHECK(scene_from_json(scene_to_json(s)) == s);
    std::filesystem::remove_all(dir);

    auto j = scene_to_json(scenes[0]);
    j["gt_box"] = {0, 0, 500, 500};
    CHECK_THROWS_AS(scene_from_json(j), ValidationError);
}

TEST_CASE("ppm codecs") {
    const auto img = decode_ppm("P3\n2 1\n255\n255 0 0  0 255 0\n");
    REQUIRE(img.width() == 2);
    CHECK(img.at(0, 0) == Rgb{255, 0, 0});
    CHECK(img.at(1, 0) == Rgb{0, 255, 0});
    CHECK(decode_ppm("P3\n# comment\n2 1\n255\n255 0 0 0 255 0") == img);

    const auto scene = gen_scene(testing::base_spec());
    CHECK(decode_ppm(encode_ppm(scene.image, true)) == scene.image);
    CHECK(decode_ppm(encode_ppm(scene.image, false)) == scene.image);

    CHECK_THROWS_AS(decode_ppm("\x89PNG\r\n\x1a\n"), ValidationError);
    CHECK_THROWS_AS(decode_ppm("P3\n1 1\n65535\n1 2 3\n"), ValidationError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\nabc"), ValidationError);

    const auto dir = testing::scratch_dir("ppm");
    const auto path = (dir / "x.ppm").string();
    save_ppm(path, scene.image);
    CHECK(load_ppm(path) == scene.image);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_ppm(path), IoError);
}
