#pragma once

#include "matpac/error.hpp"
#include "matpac/tensor.hpp"
#include "matpac/autograd.hpp"
#include "matpac/wav.hpp"
#include "matpac/resample.hpp"
#include "matpac/manifest.hpp"
#include "matpac/frontend.hpp"
#include "matpac/masking.hpp"
#include "matpac/model.hpp"
#include "matpac/objectives.hpp"
#include "matpac/schedules.hpp"
#include "matpac/optimizer.hpp"
#include "matpac/container.hpp"
#include "matpac/config.hpp"
#include "matpac/trainer.hpp"
#include "matpac/evaluation.hpp"
#include "matpac/pipeline.hpp"
#include "matpac/synth.hpp"
