#pragma once
// A small synthetic run in a scratch directory: four months of data, tiny
// branches, a few epochs. Shared by the forecaster and pipeline tests.

#include <string>

#include "pilf/pipeline.hpp"
#include "support/oracles.hpp"

namespace pilf::check {

inline RunConfig tiny_config(const oracle::TempDir& dir) {
  RunConfig c;
  c.load_path = dir.file("data/load.csv");
  c.weather_path = dir.file("data/weather.csv");
  c.holidays_path = dir.file("data/holidays.txt");
  c.out_dir = dir.file("out");
  c.split = {{make_hour(2021, 1, 1, 0), make_hour(2021, 3, 1, 0)},
             {make_hour(2021, 3, 1, 0), make_hour(2021, 4, 1, 0)},
             {make_hour(2021, 4, 1, 0), make_hour(2021, 5, 1, 0)}};
  c.cnn = {1, 4, 3, 4, 0.1, true};
  c.transformer = {4, 1, 2, 8, 4, 0.1};
  c.train.lr = 3e-3;
  c.train.batch = 64;
  c.train.max_epochs = 3;
  c.train.patience = 2;
  c.attribution = {16, 8, 4, 2, 4, 3};
  c.seed = 5;
  c.synthetic = default_synthetic_config(1, 3);
  return c;
}

/// Synthesizes, ingests and prepares the tiny run in memory.
struct TinyRun {
  oracle::TempDir dir{"tiny"};
  RunConfig config = tiny_config(dir);
  PreparedData data;
  PhysicsContext physics;

  TinyRun() {
    stage_synth(config, {});
    data = prepare_data(ingest_files(config).frame, config);
    physics = calibrate_physics(data.frame, config);
  }
};

}  // namespace pilf::check
