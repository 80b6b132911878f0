# errors.py
"""
实验室统一异常体系

所有模块抛出的异常都继承自 AcfLabError，同时继承最接近的内置异常，
调用方既可以统一捕获，也可以按内置类型区分。
"""


class AcfLabError(Exception):
    """acf-lab 所有异常的基类"""


class OutOfStencilError(AcfLabError, IndexError):
    """差分模板越过网格边界"""


class IncompatibleGridError(AcfLabError, ValueError):
    """两个场不在同一网格上"""


class UnderResolvedScaleError(AcfLabError, ValueError):
    """尺度低于网格分辨率下限（半径 < 4h、圆周采样不足等）"""


class DomainError(AcfLabError, ValueError):
    """球超出网格覆盖范围或求解区域"""


class DegenerateInterfaceError(AcfLabError, ValueError):
    """界面栅格化后出现自接触或区域泄漏"""


class SolverStallError(AcfLabError, RuntimeError):
    """松弛迭代在最大扫描次数内未收敛"""

    def __init__(self, message: str, residual: float, sweeps: int):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class DegenerateFitError(AcfLabError, ValueError):
    """拟合退化：环域上全零或斜率为零"""


class UnsupportedDimensionError(AcfLabError, NotImplementedError):
    """该操作只支持二维"""


class CoverageShortfallError(AcfLabError, ValueError):
    """重标度所需区域超出已有网格"""


class NoQualifyingCentersError(AcfLabError, ValueError):
    """所有中心都未通过 κ 门限"""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(AcfLabError, ValueError):
    """实验配置无效"""


class FieldFormatError(AcfLabError, ValueError):
    """ACF1 文件格式错误"""
