from shapes.units import mm_to_cm


def rectangle_perimeter(width, height):
    return width + height


def rectangle_perimeter_cm(width_mm, height_mm):
    return mm_to_cm(rectangle_perimeter(width_mm, height_mm))
