"""Instrumentation: frame layout, tag assignment, tagging code and tag forgery prevention."""

from .layout import DynamicSlot, FrameLayout, FrameSlot, base_tag, check_layout, layout_frame
from .rewrite import (
    InstrumentError,
    InstrumentOptions,
    TagPlan,
    assign_tags,
    check_tag_plan,
    instrument,
    instrument_function,
)

__all__ = [
    "DynamicSlot",
    "FrameLayout",
    "FrameSlot",
    "InstrumentError",
    "InstrumentOptions",
    "TagPlan",
    "assign_tags",
    "base_tag",
    "check_layout",
    "check_tag_plan",
    "instrument",
    "instrument_function",
    "layout_frame",
]
