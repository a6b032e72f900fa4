import json
import random

import numpy as np
import pytest

from facade_pipeline.geometry import BBox, bbox_to_wire
from facade_pipeline.guidance import (
    DETECT_INSTRUCTION,
    UPDATE_INSTRUCTION,
    Detection,
    DetectionSet,
    GuidanceBackendError,
    HttpGuidanceBackend,
    Modification,
    ParseFailureError,
    RenovationPlan,
    StubGuidanceBackend,
    make_guidance_backend,
    parse_grounding,
    run_detect,
    run_propose,
    serialize_boxes,
    stub_detect,
    stub_propose,
    validate_plan,
)
from facade_pipeline.sketch import SketchImage
from facade_pipeline.synthetic import draw_rect_outline

from oracles import pixel_count_iou


def test_instruction_strings_are_fixed():
    assert DETECT_INSTRUCTION == "Detect all windows and doors in the image"
    assert UPDATE_INSTRUCTION == "Update the layout based on the detected boxes"


class TestParseGrounding:
    def test_direct_array(self):
        parsed = parse_grounding('[{"label":"door","bbox_2d":[450,700,550,1000]}]')
        assert len(parsed.boxes) == 1
        assert parsed.boxes[0].label == "door"
        assert parsed.boxes[0].box == BBox(0.45, 0.7, 0.55, 1.0)
        assert parsed.dropped == []

    def test_fenced_empty_array(self):
        parsed = parse_grounding("Here are the boxes: ```json [] ```")
        assert parsed.boxes == []
        assert parsed.dropped == []

    def test_unknown_label_dropped_and_reported(self):
        parsed = parse_grounding('[{"label":"chimney","bbox_2d":[0,0,100,100]}]')
        assert parsed.boxes == []
        assert len(parsed.dropped) == 1
        assert parsed.dropped[0].reason == "unknown_label"

    def test_prose_wrapped_array(self):
        raw = ('I analyzed the sketch [carefully]. Results:\n'
               '[{"label": "window", "bbox_2d": [100, 200, 300, 400]},\n'
               ' {"label": "window", "bbox_2d": [500, 200, 700, 400]}]\n'
               'Let me know if you need more.')
        parsed = parse_grounding(raw)
        assert [b.label for b in parsed.boxes] == ["window", "window"]

    def test_degenerate_box_skipped_and_recorded(self):
        parsed = parse_grounding(
            '[{"label":"window","bbox_2d":[100,100,100,400]},'
            '{"label":"door","bbox_2d":[450,700,550,1000]}]'
        )
        assert [b.label for b in parsed.boxes] == ["door"]
        assert parsed.dropped[0].reason == "degenerate"

    def test_malformed_bbox_recorded(self):
        parsed = parse_grounding('[{"label":"window","bbox_2d":[1,2,3]},'
                                 '{"label":"window"}]')
        assert parsed.boxes == []
        assert {d.reason for d in parsed.dropped} == {"malformed"}

    def test_no_array_is_parse_failure(self):
        with pytest.raises(ParseFailureError):
            parse_grounding("I could not find any windows or doors.")

    def test_confidence_and_rationale_optional(self):
        parsed = parse_grounding(
            '[{"label":"window","bbox_2d":[0,0,100,100],"confidence":0.9,'
            '"rationale":"south wall"}]'
        )
        assert parsed.boxes[0].confidence == 0.9
        assert parsed.boxes[0].rationale == "south wall"
        assert parsed.modifications()[0].rationale == "south wall"

    def test_bad_confidence_ignored(self):
        parsed = parse_grounding('[{"label":"window","bbox_2d":[0,0,100,100],'
                                 '"confidence":7}]')
        assert parsed.boxes[0].confidence is None

    def test_round_trip_is_identity(self):
        rng = random.Random(21)
        for _ in range(50):
            items = []
            for _ in range(rng.randint(0, 6)):
                x0, y0 = rng.uniform(0, 0.8), rng.uniform(0, 0.8)
                items.append(Detection(
                    rng.choice(("window", "door")),
                    BBox(x0, y0, x0 + rng.uniform(0.01, 0.19), y0 + rng.uniform(0.01, 0.19)),
                ))
            text = serialize_boxes(items)
            parsed = parse_grounding(text)
            assert serialize_boxes(parsed.detections()) == text


class TestValidatePlan:
    def test_empty_plan_valid(self):
        plan = RenovationPlan("s", DetectionSet("s"), [])
        assert validate_plan(plan).valid

    def test_identical_mods_violate(self):
        box = BBox(0.1, 0.1, 0.3, 0.3)
        plan = RenovationPlan("s", DetectionSet("s"), [
            Modification("ADD", "window", box),
            Modification("ADD", "window", box),
        ])
        report = validate_plan(plan)
        assert not report.valid
        assert len(report.violations) == 1
        assert report.violations[0].kind == "mod-mod"
        assert report.violations[0].overlap == 1.0

    def test_small_overlap_with_basis_allowed(self):
        # constructed for iou ~= 0.03, verified against the pixel-count oracle
        a = BBox(0.0, 0.0, 0.5, 0.5)
        b = BBox(0.470874, 0.0, 0.970874, 0.5)
        oracle = pixel_count_iou((a.x0, a.y0, a.x1, a.y1), (b.x0, b.y0, b.x1, b.y1))
        assert oracle == pytest.approx(0.03, abs=0.002)
        plan = RenovationPlan(
            "s",
            DetectionSet("s", [Detection("door", a)]),
            [Modification("ADD", "window", b)],
        )
        assert validate_plan(plan, tolerance=0.05).valid
        assert not validate_plan(plan, tolerance=0.01).valid

    def test_mod_basis_violation_reported(self):
        plan = RenovationPlan(
            "s",
            DetectionSet("s", [Detection("door", BBox(0.4, 0.4, 0.6, 0.6))]),
            [Modification("ADD", "window", BBox(0.41, 0.41, 0.61, 0.61))],
        )
        report = validate_plan(plan)
        assert [v.kind for v in report.violations] == ["mod-basis"]


class TestStubDetect:
    def test_blank_sketch(self):
        assert stub_detect(SketchImage.blank(200, 200)).items == []

    def test_bottom_rectangle_is_door(self):
        px = np.full((200, 200), 255, dtype=np.uint8)
        draw_rect_outline(px, 120, 80, 199, 119)  # h/w = 80/40 = 2, touches bottom
        ds = stub_detect(SketchImage(px))
        assert [(d.label, bbox_to_wire(d.box)) for d in ds.items] == [
            ("door", [400, 600, 600, 1000])
        ]

    def test_mid_canvas_rect_is_window_even_if_tall(self):
        px = np.full((200, 200), 255, dtype=np.uint8)
        draw_rect_outline(px, 40, 80, 139, 119)  # tall but nowhere near bottom
        ds = stub_detect(SketchImage(px))
        assert [d.label for d in ds.items] == ["window"]

    def test_two_identical_rectangles_ordered_left_to_right(self):
        px = np.full((200, 200), 255, dtype=np.uint8)
        for c0 in (120, 20):  # drawn right-first to prove ordering is geometric
            draw_rect_outline(px, 50, c0, 89, c0 + 39)
        ds = stub_detect(SketchImage(px))
        assert [(d.label, bbox_to_wire(d.box)) for d in ds.items] == [
            ("window", [100, 250, 300, 450]),
            ("window", [600, 250, 800, 450]),
        ]

    def test_open_shape_not_detected(self):
        px = np.full((100, 100), 255, dtype=np.uint8)
        px[20, 20:60] = 0
        px[20:60, 20] = 0  # an L, not a closed rectangle
        assert stub_detect(SketchImage(px)).items == []

    def test_filled_rectangle_rejected(self):
        px = np.full((100, 100), 255, dtype=np.uint8)
        px[20:60, 20:60] = 0
        assert stub_detect(SketchImage(px)).items == []

    def test_deterministic_serialization(self):
        sketch, _ = __import__("facade_pipeline.synthetic", fromlist=["x"]).facade_sketch(9)
        a = serialize_boxes(stub_detect(sketch).items)
        b = serialize_boxes(stub_detect(sketch).items)
        assert a == b


class TestStubPropose:
    def test_empty_basis_gives_four_windows_and_a_door(self):
        plan = stub_propose(SketchImage.blank(1000, 800), DetectionSet("s"), "")
        wires = [(m.label, bbox_to_wire(m.box)) for m in plan.mods]
        assert wires == [
            ("window", [80, 460, 200, 640]),
            ("window", [320, 460, 440, 640]),
            ("window", [560, 460, 680, 640]),
            ("window", [800, 460, 920, 640]),
            ("door", [450, 750, 550, 1000]),
        ]
        assert validate_plan(plan).valid

    def test_basis_door_suppresses_new_door(self):
        basis = DetectionSet("s", [Detection("door", BBox(0.8, 0.7, 0.9, 1.0))])
        plan = stub_propose(SketchImage.blank(400, 400), basis, "")
        assert all(m.label != "door" for m in plan.mods)

    def test_blocked_band_gives_zero_windows(self):
        basis = DetectionSet("s", [Detection("window", BBox(0.0, 0.35, 1.0, 0.75))])
        plan = stub_propose(SketchImage.blank(400, 400), basis, "")
        assert [m.label for m in plan.mods] == ["door"]

    def test_rationale_template_uses_brief(self):
        plan = stub_propose(SketchImage.blank(400, 400), DetectionSet("s"), "more light")
        assert plan.mods[0].rationale == "add window: more light"
        plan2 = stub_propose(SketchImage.blank(400, 400), DetectionSet("s"), "")
        assert plan2.mods[0].rationale == "add window"

    def test_proposals_always_validate(self):
        rng = random.Random(31)
        for _ in range(100):
            items = []
            for _ in range(rng.randint(0, 6)):
                x0, y0 = rng.uniform(0, 0.85), rng.uniform(0, 0.85)
                items.append(Detection(
                    rng.choice(("window", "door")),
                    BBox(x0, y0, min(1.0, x0 + rng.uniform(0.05, 0.4)),
                         min(1.0, y0 + rng.uniform(0.05, 0.4))),
                ))
            basis = DetectionSet("s", items)
            plan = stub_propose(SketchImage.blank(300, 300), basis, "brief")
            assert validate_plan(plan).valid

    def test_deterministic(self):
        basis = DetectionSet("s", [Detection("window", BBox(0.1, 0.4, 0.3, 0.6))])
        a = stub_propose(SketchImage.blank(500, 500), basis, "x")
        b = stub_propose(SketchImage.blank(500, 500), basis, "x")
        assert serialize_boxes(a.mods, True) == serialize_boxes(b.mods, True)


class TestBackends:
    def test_stub_backend_round_trip(self):
        from facade_pipeline.synthetic import facade_sketch

        sketch, _ = facade_sketch(17)
        backend = StubGuidanceBackend()
        detections, parsed = run_detect(sketch, backend)
        assert parsed.dropped == []
        plan = run_propose(sketch, detections, "open a storefront", backend)
        assert validate_plan(plan).valid
        assert all(m.action == "ADD" for m in plan.mods)
        # rationale survives the live text protocol
        assert all("storefront" in m.rationale for m in plan.mods)

    def test_factory(self):
        assert isinstance(make_guidance_backend({"kind": "stub"}), StubGuidanceBackend)
        http = make_guidance_backend({"kind": "http", "endpoint": "http://x/y"})
        assert isinstance(http, HttpGuidanceBackend)
        with pytest.raises(ValueError):
            make_guidance_backend({"kind": "llm"})
        with pytest.raises(ValueError):
            make_guidance_backend({"kind": "http"})

    def test_http_backend_protocol(self, monkeypatch):
        calls = []

        class FakeResponse:
            status_code = 200

            def json(self):
                return {"text": '[{"label":"window","bbox_2d":[0,0,100,100]}]'}

        def fake_post(url, json=None, timeout=None):
            calls.append((url, json, timeout))
            return FakeResponse()

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        backend = HttpGuidanceBackend("http://vlm.local/infer", timeout_s=5)
        raw = backend.detect(SketchImage.blank(64, 64))
        assert parse_grounding(raw).boxes[0].label == "window"
        url, payload, timeout = calls[0]
        assert url == "http://vlm.local/infer"
        assert payload["instruction"] == DETECT_INSTRUCTION
        assert timeout == 5

    def test_http_backend_error_paths(self, monkeypatch):
        import requests

        class Bad500:
            status_code = 500
            text = "boom"

        monkeypatch.setattr(requests, "post", lambda *a, **k: Bad500())
        backend = HttpGuidanceBackend("http://vlm.local/infer")
        with pytest.raises(GuidanceBackendError):
            backend.detect(SketchImage.blank(64, 64))

        def raise_timeout(*a, **k):
            raise requests.ConnectTimeout("slow")

        monkeypatch.setattr(requests, "post", raise_timeout)
        with pytest.raises(GuidanceBackendError):
            backend.detect(SketchImage.blank(64, 64))

        class NoText:
            status_code = 200

            def json(self):
                return {"output": "x"}

        monkeypatch.setattr(requests, "post", lambda *a, **k: NoText())
        with pytest.raises(GuidanceBackendError):
            backend.detect(SketchImage.blank(64, 64))


class TestWireFormats:
    def test_plan_json_shape(self):
        from facade_pipeline.guidance import plan_from_json, plan_to_json

        plan = RenovationPlan(
            "sk-1",
            DetectionSet("sk-1", [Detection("door", BBox(0.45, 0.7, 0.55, 1.0))]),
            [Modification("ADD", "window", BBox(0.1, 0.4, 0.2, 0.55), "north light")],
            brief="brighten the hall",
        )
        obj = plan_to_json(plan)
        assert set(obj) == {"sketch_id", "basis", "mods", "brief"}
        assert obj["basis"][0] == {"label": "door", "bbox_2d": [450, 700, 550, 1000]}
        assert obj["mods"][0] == {
            "action": "ADD", "label": "window", "bbox_2d": [100, 400, 200, 550],
            "rationale": "north light",
        }
        back = plan_from_json(json.loads(json.dumps(obj)))
        assert back.brief == plan.brief
        assert back.mods[0].rationale == "north light"
        assert back.basis.items[0].label == "door"
