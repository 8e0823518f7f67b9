from .ast import *  # noqa: F401,F403
from .ast import WmmSyntaxError, Program
from .parser import parse_program
from .printer import pretty_print, format_expr, format_stmt
from .cfg import build_cfg, Cfg, ThreadCfg, CfgNode
