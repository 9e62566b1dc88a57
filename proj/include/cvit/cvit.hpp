#pragma once

#include "cvit/autodiff.hpp"
#include "cvit/config.hpp"
#include "cvit/data.hpp"
#include "cvit/eval.hpp"
#include "cvit/fields.hpp"
#include "cvit/grad_check.hpp"
#include "cvit/nn.hpp"
#include "cvit/operators/cvit.hpp"
#include "cvit/operators/deeponet.hpp"
#include "cvit/operators/fno.hpp"
#include "cvit/operators/gno.hpp"
#include "cvit/plot.hpp"
#include "cvit/serialize.hpp"
#include "cvit/task.hpp"
#include "cvit/training.hpp"
#include "cvit/verify.hpp"
