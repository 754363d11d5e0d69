#include <CLI11.hpp>
#include <json.hpp>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "c4av/checkpoint.hpp"
#include "c4av/dataset.hpp"
#include "c4av/evaluation.hpp"
#include "c4av/model.hpp"
#include "c4av/synthetic.hpp"
#include "c4av/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace c4av;

namespace {

std::string default_data_root() {
    const char* env = std::getenv("C4AV_DATA");
    return env ? env : "";
}

// Flat JSON config mirroring the run options. Flags override file values,
// file values override defaults; unknown keys are rejected.
struct TrainOptions {
    std::string data = default_data_root();
    std::string out;
    std::string config_file;
    int epochs = 10;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 18;
    double lr_decay_factor = 10.0;
    int lr_decay_every = 4;
    unsigned seed = 0;
    int k = 16;
    int max_len = 40;
    int min_freq = 1;
    std::string backbone = "resnet18";
    bool tiny_backbone = false;
    int embed_dim = 512;
    int word_embed_dim = 128;
    int rnn_hidden = 256;
    int crop_size = 224;
    bool pretrained = false;
    bool deterministic = false;
    std::string device = "cpu";
};

void apply_config_file(TrainOptions& opt, const CLI::App* cmd) {
    std::ifstream in(opt.config_file);
    if (!in) throw CLI::ValidationError("--config", "cannot read " + opt.config_file);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CLI::ValidationError("--config", std::string("malformed JSON: ") + e.what());
    }
    auto given = [&](const std::string& flag) {
        auto* o = cmd->get_option_no_throw(flag);
        return o && o->count() > 0;
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "data" && !given("--data")) opt.data = value.get<std::string>();
        else if (key == "out" && !given("--out")) opt.out = value.get<std::string>();
        else if (key == "epochs" && !given("--epochs")) opt.epochs = value.get<int>();
        else if (key == "lr" && !given("--lr")) opt.lr = value.get<double>();
        else if (key == "momentum" && !given("--momentum")) opt.momentum = value.get<double>();
        else if (key == "weight_decay" && !given("--weight-decay"))
            opt.weight_decay = value.get<double>();
        else if (key == "batch_size" && !given("--batch")) opt.batch_size = value.get<int>();
        else if (key == "lr_decay_factor" && !given("--lr-decay-factor"))
            opt.lr_decay_factor = value.get<double>();
        else if (key == "lr_decay_every" && !given("--lr-decay-every"))
            opt.lr_decay_every = value.get<int>();
        else if (key == "seed" && !given("--seed")) opt.seed = value.get<unsigned>();
        else if (key == "k" && !given("--k")) opt.k = value.get<int>();
        else if (key == "max_len" && !given("--max-len")) opt.max_len = value.get<int>();
        else if (key == "min_freq" && !given("--min-freq")) opt.min_freq = value.get<int>();
        else if (key == "backbone" && !given("--backbone"))
            opt.backbone = value.get<std::string>();
        else if (key == "tiny_backbone" && !given("--tiny-backbone"))
            opt.tiny_backbone = value.get<bool>();
        else if (key == "embed_dim" && !given("--embed-dim")) opt.embed_dim = value.get<int>();
        else if (key == "word_embed_dim" && !given("--word-embed-dim"))
            opt.word_embed_dim = value.get<int>();
        else if (key == "rnn_hidden" && !given("--rnn-hidden")) opt.rnn_hidden = value.get<int>();
        else if (key == "crop_size" && !given("--crop-size")) opt.crop_size = value.get<int>();
        else if (key == "pretrained" && !given("--pretrained")) opt.pretrained = value.get<bool>();
        else if (key == "deterministic" && !given("--deterministic"))
            opt.deterministic = value.get<bool>();
        else if (key == "device" && !given("--device")) opt.device = value.get<std::string>();
        else if (key == "data" || key == "out" || key == "epochs" || key == "lr" ||
                 key == "momentum" || key == "weight_decay" || key == "batch_size" ||
                 key == "lr_decay_factor" || key == "lr_decay_every" || key == "seed" ||
                 key == "k" || key == "max_len" || key == "min_freq" || key == "backbone" ||
                 key == "tiny_backbone" || key == "embed_dim" || key == "word_embed_dim" ||
                 key == "rnn_hidden" || key == "crop_size" || key == "pretrained" ||
                 key == "deterministic" || key == "device") {
            // known key, flag takes precedence
        } else {
            throw CLI::ValidationError("--config", "unknown config key \"" + key + "\"");
        }
    }
}

json resolved_config_json(const TrainOptions& o) {
    return {{"data", o.data},
            {"out", o.out},
            {"epochs", o.epochs},
            {"lr", o.lr},
            {"momentum", o.momentum},
            {"weight_decay", o.weight_decay},
            {"batch_size", o.batch_size},
            {"lr_decay_factor", o.lr_decay_factor},
            {"lr_decay_every", o.lr_decay_every},
            {"seed", o.seed},
            {"k", o.k},
            {"max_len", o.max_len},
            {"min_freq", o.min_freq},
            {"backbone", o.tiny_backbone ? "tiny" : o.backbone},
            {"tiny_backbone", o.tiny_backbone},
            {"embed_dim", o.embed_dim},
            {"word_embed_dim", o.word_embed_dim},
            {"rnn_hidden", o.rnn_hidden},
            {"crop_size", o.crop_size},
            {"pretrained", o.pretrained},
            {"deterministic", o.deterministic},
            {"device", o.device}};
}

int run_train(const TrainOptions& opt_in, const CLI::App* cmd) {
    TrainOptions opt = opt_in;
    if (!opt.config_file.empty()) apply_config_file(opt, cmd);
    if (opt.data.empty()) {
        std::cerr << "train: --data is required (or set C4AV_DATA)\n";
        return 2;
    }
    if (opt.out.empty()) {
        std::cerr << "train: --out is required\n";
        return 2;
    }

    auto texts = load_command_texts(opt.data, "train");
    std::vector<std::vector<std::string>> corpus;
    for (const auto& t : texts) corpus.push_back(tokenize(t));
    Vocabulary vocab = build_vocabulary(corpus, opt.min_freq);
    std::cerr << "vocabulary: " << vocab.size() << " tokens\n";

    LoadOptions lo;
    lo.k = opt.k;
    lo.max_len = opt.max_len;
    auto train_set = load_dataset(opt.data, "train", vocab, lo);
    auto val_set = load_dataset(opt.data, "val", vocab, lo);
    std::cerr << "loaded " << train_set.size() << " train / " << val_set.size()
              << " val samples\n";

    ModelConfig mc;
    if (opt.tiny_backbone) {
        mc = ModelConfig::tiny(vocab.size());
    } else {
        mc.embed_dim = opt.embed_dim;
        mc.word_embed_dim = opt.word_embed_dim;
        mc.rnn_hidden = opt.rnn_hidden;
        mc.vocab_size = vocab.size();
        mc.crop_size = opt.crop_size;
        mc.backbone = opt.backbone;
        mc.pretrained = opt.pretrained;
    }
    mc.k = opt.k;

    TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.base_lr = opt.lr;
    tc.momentum = opt.momentum;
    tc.weight_decay = opt.weight_decay;
    tc.batch_size = opt.batch_size;
    tc.lr_decay_factor = opt.lr_decay_factor;
    tc.lr_decay_every = opt.lr_decay_every;
    tc.seed = opt.seed;
    tc.deterministic = opt.deterministic;

    fs::create_directories(opt.out);
    {
        std::ofstream rc(fs::path(opt.out) / "resolved_config.json");
        rc << resolved_config_json(opt).dump(2) << "\n";
    }

    Model model(mc, opt.seed);
    auto result = train(model, train_set, val_set, tc, opt.out, vocab);
    std::cout << "best val AP50 " << result.best_val_ap50 << " at epoch " << result.best_epoch
              << "\n";
    return 0;
}

int run_synth(const SyntheticConfig& cfg, const std::string& out) {
    auto summary = generate_synthetic(cfg, out);
    Vocabulary empty_vocab;
    LoadOptions lo;
    lo.load_pixels = false;
    auto train_set = load_dataset(out, "train", empty_vocab, lo);
    std::cout << "train images: " << summary.train_images << "\n"
              << "val images: " << summary.val_images << "\n"
              << "test images: " << summary.test_images << "\n"
              << "train proposal oracle: " << proposal_oracle(train_set) << "\n";
    return 0;
}

int run_eval(const std::string& data, const std::string& split, const std::string& checkpoint,
             const std::string& submission, const std::string& report_path, int k) {
    EvalReport report;
    if (!checkpoint.empty()) {
        auto ck = load_checkpoint(checkpoint);
        LoadOptions lo;
        lo.k = ck.model->config().k;
        report = evaluate_model(*ck.model, load_dataset(data, split, ck.vocab, lo));
    } else {
        Vocabulary empty_vocab;
        LoadOptions lo;
        lo.k = k;
        lo.load_pixels = false;
        auto samples = load_dataset(data, split, empty_vocab, lo);
        report = ap50(read_submission(submission), ground_truth_map(samples));
        report.oracle_rate = proposal_oracle(samples);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "AP50: %.4f\nOracle: %.4f\n", report.ap50,
                  report.oracle_rate);
    std::cout << buf;
    if (!report_path.empty()) {
        json per = json::array();
        for (const auto& pc : report.per_command)
            per.push_back(
                {{"command_id", pc.command_id}, {"iou", pc.iou}, {"correct", pc.correct}});
        json j = {{"ap50", report.ap50},
                  {"num_commands", report.num_commands},
                  {"oracle_rate", report.oracle_rate},
                  {"per_command", per}};
        std::ofstream out(report_path);
        if (!out) throw std::runtime_error("cannot write " + report_path);
        out << j.dump(2) << "\n";
    }
    return 0;
}

int run_predict(const std::string& data, const std::string& split, const std::string& checkpoint,
                const std::string& out) {
    auto ck = load_checkpoint(checkpoint);
    LoadOptions lo;
    lo.k = ck.model->config().k;
    auto samples = load_dataset(data, split, ck.vocab, lo);
    std::vector<Prediction> preds;
    preds.reserve(samples.size());
    for (const auto& s : samples) preds.push_back(predict(*ck.model, s));
    write_submission(preds, out);
    std::cerr << "wrote " << preds.size() << " predictions to " << out << "\n";
    return 0;
}

int run_visualize(const std::string& data, const std::string& split,
                  const std::string& submission, const std::string& ids_arg,
                  const std::string& out_dir) {
    Vocabulary empty_vocab;
    LoadOptions lo;
    lo.load_pixels = false;
    auto samples = load_dataset(data, split, empty_vocab, lo);
    auto preds = read_submission(submission);
    std::map<std::string, Box> pred_map;
    for (const auto& p : preds) pred_map[p.command_id] = p.box;

    std::vector<std::string> ids;
    if (ids_arg.empty()) {
        for (const auto& s : samples) ids.push_back(s.command.id);
    } else {
        std::stringstream ss(ids_arg);
        std::string id;
        while (std::getline(ss, id, ','))
            if (!id.empty()) ids.push_back(id);
    }

    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.command.id] = &s;

    fs::create_directories(out_dir);
    for (const auto& id : ids) {
        auto sit = by_id.find(id);
        if (sit == by_id.end()) throw std::runtime_error("unknown command id " + id);
        auto pit = pred_map.find(id);
        if (pit == pred_map.end())
            throw std::runtime_error("no prediction for command id " + id);
        const Sample& s = *sit->second;
        cv::Mat img =
            cv::imread((fs::path(data) / split / "images" / s.image.file).string());
        if (img.empty()) throw std::runtime_error("cannot read image for command " + id);

        auto rect = [](const Box& b) {
            return cv::Rect2d(b.x, b.y, b.w, b.h);
        };
        cv::rectangle(img, rect(pit->second), cv::Scalar(0, 0, 255), 2);  // prediction: red
        if (s.command.gt_box)
            cv::rectangle(img, rect(*s.command.gt_box), cv::Scalar(0, 200, 0), 2);  // gt: green

        const int margin = 28;
        cv::Mat canvas(img.rows + margin, img.cols, img.type(), cv::Scalar(255, 255, 255));
        img.copyTo(canvas(cv::Rect(0, 0, img.cols, img.rows)));
        cv::putText(canvas, s.command.text, cv::Point(4, img.rows + margin - 9),
                    cv::FONT_HERSHEY_SIMPLEX, 0.38, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
        std::string out_file = (fs::path(out_dir) / (id + ".png")).string();
        if (!cv::imwrite(out_file, canvas))
            throw std::runtime_error("cannot write " + out_file);
    }
    std::cerr << "wrote " << ids.size() << " visualizations to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-referral baseline: rank region proposals against a command"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
    SyntheticConfig scfg;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--images", scfg.num_images, "Total images across splits")
        ->check(CLI::PositiveNumber);
    synth->add_option("--image-size", scfg.image_size, "Image side in pixels")
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", scfg.seed, "RNG seed");
    synth->add_option("--jitter", scfg.proposal_jitter, "Proposal jitter fraction")
        ->check(CLI::Range(0.0, 0.5));
    synth->add_option("--distractors", scfg.distractor_proposals, "Distractor proposals per image")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--shapes-min", scfg.shapes_min, "Min shapes per image")
        ->check(CLI::PositiveNumber);
    synth->add_option("--shapes-max", scfg.shapes_max, "Max shapes per image")
        ->check(CLI::PositiveNumber);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the dual-encoder ranker");
    TrainOptions topt;
    train_cmd->add_option("--data", topt.data, "Dataset root (default: $C4AV_DATA)");
    train_cmd->add_option("--out", topt.out, "Run output directory");
    train_cmd->add_option("--config", topt.config_file, "Flat JSON config file");
    train_cmd->add_option("--epochs", topt.epochs, "0 = validation-only dry run")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--lr", topt.lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--momentum", topt.momentum)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--weight-decay", topt.weight_decay)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--batch", topt.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr-decay-factor", topt.lr_decay_factor)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr-decay-every", topt.lr_decay_every)->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", topt.seed);
    train_cmd->add_option("--k", topt.k)->check(CLI::PositiveNumber);
    train_cmd->add_option("--max-len", topt.max_len)->check(CLI::PositiveNumber);
    train_cmd->add_option("--min-freq", topt.min_freq)->check(CLI::PositiveNumber);
    train_cmd->add_option("--backbone", topt.backbone, "Backbone: resnet18 | tiny");
    train_cmd->add_flag("--tiny-backbone", topt.tiny_backbone,
                        "Use the desk-scale model configuration");
    train_cmd->add_option("--embed-dim", topt.embed_dim)->check(CLI::PositiveNumber);
    train_cmd->add_option("--word-embed-dim", topt.word_embed_dim)->check(CLI::PositiveNumber);
    train_cmd->add_option("--rnn-hidden", topt.rnn_hidden)->check(CLI::PositiveNumber);
    train_cmd->add_option("--crop-size", topt.crop_size)->check(CLI::PositiveNumber);
    train_cmd->add_flag("--pretrained", topt.pretrained,
                        "Expect pretrained backbone weights (not bundled)");
    train_cmd->add_flag("--deterministic", topt.deterministic,
                        "Serial batch accumulation for bitwise reproducibility");
    train_cmd->add_option("--device", topt.device, "cpu (only cpu is implemented)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or submission with AP50");
    std::string e_data = default_data_root(), e_split = "val", e_ck, e_sub, e_report;
    int e_k = 16;
    eval_cmd->add_option("--data", e_data, "Dataset root (default: $C4AV_DATA)");
    eval_cmd->add_option("--split", e_split, "Split to evaluate");
    eval_cmd->add_option("--checkpoint", e_ck, "Checkpoint directory");
    eval_cmd->add_option("--submission", e_sub, "Submission JSON to score");
    eval_cmd->add_option("--report", e_report, "Write full report JSON here");
    eval_cmd->add_option("--k", e_k, "Proposals per sample (submission mode)")
        ->check(CLI::PositiveNumber);

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "Write a submission for a split");
    std::string p_data = default_data_root(), p_split = "test", p_ck, p_out;
    pred_cmd->add_option("--data", p_data, "Dataset root (default: $C4AV_DATA)");
    pred_cmd->add_option("--split", p_split, "Split to predict");
    pred_cmd->add_option("--checkpoint", p_ck, "Checkpoint directory")->required();
    pred_cmd->add_option("--out", p_out, "Submission output path")->required();

    // visualize
    auto* vis_cmd = app.add_subcommand("visualize", "Render prediction overlays");
    std::string v_data = default_data_root(), v_split = "val", v_sub, v_ids, v_out;
    vis_cmd->add_option("--data", v_data, "Dataset root (default: $C4AV_DATA)");
    vis_cmd->add_option("--split", v_split, "Split");
    vis_cmd->add_option("--submission", v_sub, "Submission JSON")->required();
    vis_cmd->add_option("--ids", v_ids, "Comma-separated command ids (default: all)");
    vis_cmd->add_option("--out", v_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return run_synth(scfg, synth_out);
        if (*train_cmd) return run_train(topt, train_cmd);
        if (*eval_cmd) {
            if (e_data.empty() || (e_ck.empty() == e_sub.empty())) {
                std::cerr << "eval: need --data and exactly one of --checkpoint/--submission\n";
                return 2;
            }
            return run_eval(e_data, e_split, e_ck, e_sub, e_report, e_k);
        }
        if (*pred_cmd) {
            if (p_data.empty()) {
                std::cerr << "predict: --data is required (or set C4AV_DATA)\n";
                return 2;
            }
            return run_predict(p_data, p_split, p_ck, p_out);
        }
        if (*vis_cmd) {
            if (v_data.empty()) {
                std::cerr << "visualize: --data is required (or set C4AV_DATA)\n";
                return 2;
            }
            return run_visualize(v_data, v_split, v_sub, v_ids, v_out);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
