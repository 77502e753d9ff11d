#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "ovod/detector_env.hpp"
#include "ovod/visual_actions.hpp"

#ifndef OVOD_DATA_DIR
#define OVOD_DATA_DIR "data"
#endif

namespace testing {

inline const std::string kLexiconPath = std::string(OVOD_DATA_DIR) + "/lexicon.tsv";

inline const ovod::Lexicon& shipped_lexicon() {
    static const ovod::Lexicon lex = ovod::Lexicon::load(kLexiconPath);
    return lex;
}

/// A well-lit red smooth apricot in the middle of a clean 96x96 canvas.
inline ovod::SceneSpec base_spec(const std::string& id = "img") {
    ovod::SceneSpec s;
    s.image_id = id;
    s.noun = "apricot";
    s.gt_box = {33, 33, 63, 63};
    s.seed = 17;
    return s;
}

inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("ovod_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
