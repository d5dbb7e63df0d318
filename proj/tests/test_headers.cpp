#include <gtest/gtest.h>

#include "pilf/attribution.hpp"
#include "pilf/ensemble.hpp"
#include "pilf/evaluation.hpp"
#include "pilf/extreme_events.hpp"
#include "pilf/forecaster.hpp"
#include "pilf/ingest.hpp"
#include "pilf/physics.hpp"

TEST(Headers, Compile) { SUCCEED(); }
#include "pilf/pipeline.hpp"
