"""Create the parsers for training configuration files and layer selectors"""
import importlib.resources

from lark import Lark

from . import resources


def _load(grammar_name: str) -> Lark:
    with (importlib.resources.files(resources) / grammar_name).open("rt") as grammar_file:
        return Lark(grammar_file.read(), parser="lalr")


config_parser = _load("train_config.lark")
selector_parser = _load("layer_selector.lark")
