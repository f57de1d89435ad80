#pragma once

#include "numod/adam.hpp"
#include "numod/checkpoint.hpp"
#include "numod/eval.hpp"
#include "numod/gfcn.hpp"
#include "numod/invariant.hpp"
#include "numod/objective.hpp"
#include "numod/sequence_io.hpp"
#include "numod/synth.hpp"
#include "numod/trainer.hpp"
#include "numod/types.hpp"
