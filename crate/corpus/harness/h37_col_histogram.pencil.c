void col_histogram(int n, int M[const restrict static n][n], int H[const restrict static n])
{
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++)
      H[M[i][j]] += 1;
}
