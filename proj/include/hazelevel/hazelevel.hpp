#pragma once

#include "hazelevel/csv.hpp"
#include "hazelevel/dark_channel.hpp"
#include "hazelevel/depth.hpp"
#include "hazelevel/estimator.hpp"
#include "hazelevel/evaluation.hpp"
#include "hazelevel/guided_filter.hpp"
#include "hazelevel/image.hpp"
#include "hazelevel/ingest.hpp"
#include "hazelevel/io.hpp"
#include "hazelevel/procedural.hpp"
#include "hazelevel/sample.hpp"
#include "hazelevel/synth.hpp"
