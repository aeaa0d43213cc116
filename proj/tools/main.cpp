#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "emghand/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"multimodal hand tracking toolkit: synthetic sessions, model "
               "training, inference, fusion service, and evaluation"};
  app.require_subcommand(1);

  emghand::cli::GenerateArgs gen;
  auto* generate = app.add_subcommand(
      "generate", "synthesize session recordings for the six hand-pose tasks");
  generate->add_option("--out", gen.out_dir, "output directory")->required();
  generate->add_option("--seed", gen.seed, "base seed (default 42)");
  generate->add_option("--task", gen.tasks, "task filter: i..vi (repeatable)");
  generate->add_option("--speed", gen.speeds, "speed filter: slow|moderate|fast");
  generate->add_option("--condition", gen.conditions, "condition filter: full_view|occluded");
  generate->add_option("--sessions", gen.sessions, "sessions per combination (default 3)");
  generate->add_option("--reps", gen.repetitions, "gesture repetitions per session (default 8)");

  emghand::cli::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the joint-angle estimator");
  train_cmd->add_option("--data", train.data_dir, "directory of recordings")->required();
  train_cmd->add_option("--out", train.out_checkpoint, "checkpoint output path")->required();
  train_cmd->add_option("--report", train.report_path, "training report JSON path");
  train_cmd->add_option("--condition", train.condition_filter,
                        "recording filter: full_view|occluded|all (default full_view)");
  train_cmd->add_option("--max-steps", train.max_steps, "step budget (default 50000)");
  train_cmd->add_option("--target-deg", train.target_deg,
                        "early-stop validation error in degrees (default 3.0)");
  train_cmd->add_option("--batch", train.batch, "batch size (default 256)");
  train_cmd->add_option("--seed", train.seed, "training seed (default 42)");
  train_cmd->add_option("--hop", train.hop, "window hop in samples (default 1)");
  train_cmd->add_flag("--resume", train.resume, "continue from the checkpoint at --out");
  train_cmd->add_option("--window-n", train.window_n, "window length (default 150)");
  train_cmd->add_option("--window-nhat", train.window_n_hat,
                        "trailing samples for the recurrent branch (default 50)");
  train_cmd->add_option("--lstm-hidden", train.lstm_hidden, "LSTM width (default 128)");
  train_cmd->add_option("--feat-hidden", train.feat_hidden, "feature branch width (default 64)");
  train_cmd->add_option("--wav-hidden", train.wav_hidden, "wavelet branch width (default 64)");
  train_cmd->add_option("--filt-hidden", train.filt_hidden, "raw branch width (default 128)");
  train_cmd->add_option("--final-hidden", train.final_hidden, "head width (default 256)");

  emghand::cli::InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "sliding-window inference over recordings");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "trained checkpoint")->required();
  infer_cmd->add_option("--data", infer.data_path, "recording file or directory")->required();
  infer_cmd->add_option("--out", infer.out_dir, "predictions output directory")->required();

  emghand::cli::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "statistical comparison of vision vs multimodal tracking");
  eval_cmd->add_option("--data", eval.data_dir, "directory of recordings")->required();
  eval_cmd->add_option("--pred", eval.pred_dir, "directory of predictions")->required();
  eval_cmd->add_option("--out", eval.out_dir, "report output directory")->required();

  emghand::cli::ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the 50 Hz fusion service over TCP");
  serve_cmd->add_option("--checkpoint", serve.checkpoint, "trained checkpoint")->required();
  serve_cmd->add_option("--emg-port", serve.emg_port, "inbound emg frame port")->required();
  serve_cmd->add_option("--vision-port", serve.vision_port, "inbound pose frame port")->required();
  serve_cmd->add_option("--out-port", serve.out_port, "outbound fused frame port")->required();
  serve_cmd->add_option("--tolerance-ms", serve.tolerance_ms,
                        "pairing tolerance in ms (default 10)");
  serve_cmd->add_option("--queue", serve.queue, "bounded queue capacity (default 64)");
  serve_cmd->add_flag("--once", serve.once, "exit after the inbound streams close");

  emghand::cli::SelftestArgs selftest;
  auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in verification battery");
  selftest_cmd->add_flag("--inject-lstm-fault", selftest.inject_lstm_fault,
                         "flip a sign in the LSTM backward pass; the gradient "
                         "check is then expected to fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    if (*generate) return emghand::cli::cmd_generate(gen);
    if (*train_cmd) return emghand::cli::cmd_train(train);
    if (*infer_cmd) return emghand::cli::cmd_infer(infer);
    if (*eval_cmd) return emghand::cli::cmd_eval(eval);
    if (*serve_cmd) return emghand::cli::cmd_serve(serve);
    if (*selftest_cmd) return emghand::cli::cmd_selftest(selftest);
  } catch (const emghand::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
