"""Feature map layer selectors such as `EB2/layer7`"""
from dataclasses import dataclass
from typing import Optional

from lark import Token, Transformer, UnexpectedInput, v_args

from ._parser import selector_parser
from .exceptions import SelectorError


@dataclass(frozen=True)
class LayerSelector:
    """A residual group label and an optional 1-based layer index"""

    block: str
    layer: Optional[int] = None

    def __str__(self) -> str:
        return self.block if self.layer is None else f"{self.block}/layer{self.layer}"


@v_args(inline=True)
class SelectorTransformer(Transformer):
    """Build a LayerSelector from the parse tree"""

    def start(self, block: Token, index: Optional[Token] = None) -> LayerSelector:
        """Entrance rule"""
        return LayerSelector(str(block), int(index) if index is not None else None)


def parse_selector(text: str) -> LayerSelector:
    """Parse `<EB|DB><k>[/layer<n>]`"""
    try:
        tree = selector_parser.parse(text.strip())
    except UnexpectedInput as error:
        raise SelectorError(f"malformed layer selector '{text}'") from error
    return SelectorTransformer().transform(tree)
