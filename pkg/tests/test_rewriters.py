from __future__ import annotations

import pytest

from bugsynth.agents.rewriters import REWRITERS, candidates, loop_block, rewrite
from bugsynth.catalog import load_baseline

FSM = [
    "always_comb begin",
    "  state_d = state_q;",
    "  unique case (state_q)",
    "    IDLE: if (start_i) state_d = BUSY;",
    "    BUSY: if (done) state_d = DONE;",
    "    DONE: state_d = IDLE;",
    "  endcase",
    "end",
]


@pytest.mark.parametrize(
    "class_id, line, expected",
    [
        ("missing_assignment", "  assign y = a & b;", "  // assign y = a & b;"),
        ("bitwise_corruption", "  assign y = a & b;", "  assign y = a;"),
        ("bitwise_corruption", "  assign y = ~a;", "  assign y = a;"),
        ("logic_bug", "    if (a && b) begin", "    if (a || b) begin"),
        ("logic_bug", "  always_ff @(posedge clk_i) begin", "  always_ff @(negedge clk_i) begin"),
        ("logic_bug", "    if (en) begin", "    if (!(en)) begin"),
        ("incorrect_data_size", "  logic [7:0] data;", "  logic [6:0] data;"),
        ("incorrect_data_size", "  logic [W-1:0] data;", "  logic [W-2:0] data;"),
        ("adjacent_field_swap", "    a <= x; b <= y;", "    a <= y; b <= x;"),
    ],
)
def test_single_line_rewrites(class_id, line, expected):
    assert rewrite(class_id, [line], [line], 0) == [expected]


def test_wrong_assignment_uses_nearest_other_lhs():
    region = ["  a = b;", "  c = d;"]
    assert rewrite("wrong_assignment", [region[1]], region, 1) == ["  a = d;"]
    ports = ["  foo u_foo (", "    .incr_en_i (inc),", "    .decr_en_i (dec)", "  );"]
    assert rewrite("wrong_assignment", [ports[2]], ports, 2) == ["    .incr_en_i (dec)"]


def test_fsm_transition_points_to_another_state():
    out = rewrite("fsm_transition_error", [FSM[3]], FSM, 3)
    assert out == ["    IDLE: if (start_i) state_d = DONE;"]
    # a default hold becomes an unconditional jump
    assert rewrite("fsm_transition_error", [FSM[1]], FSM, 1) == ["  state_d = BUSY;"]
    assert rewrite("fsm_transition_error", ["  x_d = y;"], ["  x_d = y;"], 0) is None


def test_loop_modification_shifts_start_and_index():
    region = ["for (int i = 0; i < N; i++) begin", "  out[i] = in[i];", "end"]
    assert loop_block(region, 0) == 2
    assert rewrite("loop_modification", region[:2], region, 0) == [
        "for (int i = 1; i < N; i++) begin",
        "  out[i-1] = in[i-1];",
    ]


def test_inapplicable_classes_return_none():
    assert rewrite("missing_assignment", ["endmodule"], ["endmodule"], 0) is None
    assert rewrite("incorrect_data_size", ["  logic [0:0] b;"], [], 0) is None
    assert rewrite("adjacent_field_swap", ["a <= x; b <= x;"], [], 0) is None
    assert rewrite("unknown", ["a = b;"], [], 0) is None


def test_every_baseline_class_has_a_rewriter():
    assert set(REWRITERS) == set(load_baseline().class_ids)


def test_candidates_skip_comments_and_are_stable():
    region = ["  // y = a & b;", "  assign y = a & b;", "", "  assign z = c;"]
    assert candidates("missing_assignment", region) == [(1, 1), (3, 1)]
    assert candidates("bitwise_corruption", region) == [(1, 1)]
    assert candidates("missing_assignment", region) is not candidates("missing_assignment", region)
