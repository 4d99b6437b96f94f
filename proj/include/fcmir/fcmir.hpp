#pragma once

#include "fcmir/bitstring.hpp"
#include "fcmir/config.hpp"
#include "fcmir/csv.hpp"
#include "fcmir/evalkit.hpp"
#include "fcmir/image.hpp"
#include "fcmir/image_io.hpp"
#include "fcmir/imgproc.hpp"
#include "fcmir/ingest.hpp"
#include "fcmir/keyframe.hpp"
#include "fcmir/llm.hpp"
#include "fcmir/manifest.hpp"
#include "fcmir/mock_llm.hpp"
#include "fcmir/pipeline.hpp"
#include "fcmir/reports.hpp"
#include "fcmir/stitch.hpp"
#include "fcmir/synth.hpp"
#include "fcmir/util.hpp"
