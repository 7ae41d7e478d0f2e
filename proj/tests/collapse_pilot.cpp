// Regenerates tests/fixtures/collapse_pilot.tsv: stage-2 trajectories of the
// BYOL configuration and the ablated one (no predictor, no stop-gradient,
// delta = 0) on the acceptance fixture.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "ncre/config.hpp"
#include "ncre/metrics.hpp"
#include "ncre/pipeline.hpp"

using namespace ncre;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: collapse_pilot <acceptance.cfg> <out.tsv>\n";
    return 2;
  }
  const RunConfig cfg = load_config(argv[1]);
  SynthConfig sc = cfg.synth_cfg;
  sc.seed = cfg.pipeline.seed;
  const PreparedData data =
      prepare_data(split_equal(synth_generate(sc), cfg.pipeline.seed),
                   synth_label_table(sc.num_classes), cfg.tokenizer);
  const StageArtifacts s1 = stage1_finetune(data, cfg);

  RunConfig ablated = cfg;
  ablated.byol.use_predictor = false;
  ablated.byol.stop_gradient = false;
  ablated.byol.delta = 0.0;

  std::ofstream out(argv[2]);
  out << "variant\tepoch\tmean_loss\tanisotropy\teffective_rank\tcross_class_anisotropy\n";
  for (const auto& [name, c] : {std::pair{"byol", cfg}, std::pair{"ablated", ablated}}) {
    const StageArtifacts s2 = stage2_noncontrastive(s1, data, c);
    NetworkPair pair = restore_pair(s2.checkpoint, c);
    const double cross = cross_class_anisotropy(represent_all(pair, data.eval.tokens),
                                                data.eval.labels);
    char buf[256];
    for (const EpochRecord& r : s2.history) {
      std::snprintf(buf, sizeof(buf), "%s\t%zu\t%.6f\t%.6f\t%.6f\t", name, r.epoch, r.mean_loss,
                    r.anisotropy, r.effective_rank);
      out << buf << (&r == &s2.history.back() ? std::to_string(cross) : std::string("-")) << "\n";
    }
  }
  return 0;
}
