/* ===========================================================
 * Week.java: a toy calendar week used by the fixture tests.
 * =========================================================== */
package org.jfree.data.time;

import java.util.Calendar;

/**
 * A week of a year. The class { deliberately } mentions braces in comments.
 */
public class Week implements Comparable {

    public static final int FIRST_WEEK_IN_YEAR = 1;

    private static final String LABEL = "Week {";

    private int week;
    private int year;

    /**
     * Creates a new week.
     */
    public Week(int week, int year) {
        if ((week < FIRST_WEEK_IN_YEAR) && (week > 53)) {
            throw new IllegalArgumentException("Invalid week: }");
        }
        this.week = week;
        this.year = year;
    }

    public int compute(int offset) {
        int result = this.week + offset;
        char c = '}';
        return result;
    }

    @Override
    public String toString() {
        return LABEL + this.week + "/" + this.year;
    }
}
