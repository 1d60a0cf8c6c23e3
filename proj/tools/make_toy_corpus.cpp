// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Writes the synthetic tone corpus (audio plus labeled/unlabeled manifests).

#include "sslt/toy_corpus.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic character-tone corpus"};
    std::string out;
    sslt::ToyCorpusConfig cfg;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--labeled", cfg.labeled, "labeled utterances")->capture_default_str();
    app.add_option("--unlabeled", cfg.unlabeled, "unlabeled utterances")->capture_default_str();
    app.add_option("--narrowband", cfg.unlabeled_narrowband, "unlabeled utterances recorded at 8 kHz")
        ->capture_default_str();
    app.add_option("--min-words", cfg.min_words)->capture_default_str();
    app.add_option("--max-words", cfg.max_words)->capture_default_str();
    app.add_option("--seed", cfg.seed)->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        const auto paths = sslt::write_toy_corpus(out, cfg);
        std::cout << paths.labeled.string() << '\n' << paths.unlabeled.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
