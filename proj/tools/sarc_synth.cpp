// Generates the deterministic synthetic headline corpus: train/test dataset
// files plus a structured embedding file, for desk-scale experiments when the
// real corpus is not on disk.
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sarc/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic sarcasm-headline corpus generator"};
    std::string out_dir = ".";
    std::string format = "csv";
    sarc::SynthSpec spec;
    app.add_option("--out-dir", out_dir, "Output directory");
    app.add_option("--format", format, "Dataset format: csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    app.add_option("--train-per-class", spec.train_per_class, "Training examples per class");
    app.add_option("--test-per-class", spec.test_per_class, "Test examples per class");
    app.add_option("--embed-dim", spec.embed_dim, "Embedding width");
    app.add_option("--noise", spec.label_noise, "Label-flip probability");
    app.add_option("--seed", spec.seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        auto corpus = sarc::make_synth_corpus(spec);
        const std::string ext = format == "csv" ? ".csv" : ".jsonl";
        const std::string train_path = (fs::path(out_dir) / ("train" + ext)).string();
        const std::string test_path = (fs::path(out_dir) / ("test" + ext)).string();
        const std::string embed_path = (fs::path(out_dir) / "embeddings.txt").string();
        if (format == "csv") {
            sarc::write_dataset_csv(train_path, corpus.train);
            sarc::write_dataset_csv(test_path, corpus.test);
        } else {
            sarc::write_dataset_jsonl(train_path, corpus.train);
            sarc::write_dataset_jsonl(test_path, corpus.test);
        }
        sarc::write_synth_embeddings(embed_path, spec);
        std::cout << "wrote " << train_path << " (" << corpus.train.size() << " examples)\n";
        std::cout << "wrote " << test_path << " (" << corpus.test.size() << " examples)\n";
        std::cout << "wrote " << embed_path << "\n";
    } catch (const sarc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
