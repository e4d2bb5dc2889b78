"""
gpinn - gradient-enhanced PINN 실험 도구

🧮 PDE 잔차의 gradient 까지 손실에 넣는 PINN(gPINN) 과
잔차 기반 적응 점 추가(RAR) 를 재현 가능한 실험으로 실행합니다.

주요 특징:
- 🧠 고차 미분을 지원하는 자체 reverse-mode 자동미분
- 📐 7개 벤치마크 문제 (정문제 / 역문제 / 시공간)
- ⚡ Adam, Adam → L-BFGS, NaN 롤백
- 🔁 seed × 점 개수 × 가중치 sweep 병렬 실행
- 🎨 rich 터미널 UI
"""

__version__ = "0.3.0"
__author__ = "juniper-31"
__email__ = "juniper@kakao.com"
__description__ = "Gradient-enhanced PINN experiments"
__url__ = "https://github.com/juniper-31/gpinn"
