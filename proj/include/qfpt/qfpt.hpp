// qfpt.hpp: umbrella header for the library (everything except the CLI).

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fock.hpp"
#include "qfpt/heating.hpp"
#include "qfpt/step_gate.hpp"
#include "qfpt/pulse_table.hpp"
#include "qfpt/pulse_designer.hpp"
#include "qfpt/fpt_engine.hpp"
#include "qfpt/classical.hpp"
#include "qfpt/estimators.hpp"
#include "qfpt/io.hpp"
